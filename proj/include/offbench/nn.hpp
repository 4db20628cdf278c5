#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace offbench::nn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Activation { relu, elu };
enum class InitScheme { lecun_normal, orthogonal_1_41, orthogonal_0_01 };

std::string to_string(Activation a);
std::string to_string(InitScheme s);
Activation parse_activation(std::string_view s);
InitScheme parse_init_scheme(std::string_view s);

/// Architecture of the MLP family: in -> [affine -> (LN) -> act] x hidden -> affine.
struct NetSpec {
    int input_dim = 1;
    std::vector<int> hidden_dims{256, 256};
    int output_dim = 1;
    Activation activation = Activation::relu;
    bool layer_norm = false;
    InitScheme init = InitScheme::lecun_normal;

    void validate() const;
    int num_layers() const { return static_cast<int>(hidden_dims.size()) + 1; }
    int fan_in(int layer) const;
    int fan_out(int layer) const;
    bool operator==(const NetSpec&) const = default;
};

/// Flat parameter storage for one network plus optional trailing auxiliary
/// parameters (e.g. a shared log-std vector). Layer views alias the flat buffer.
class ParamSet {
public:
    struct LayerOffsets {
        Eigen::Index weight = 0;
        Eigen::Index bias = 0;
        Eigen::Index ln_gain = -1;
        Eigen::Index ln_bias = -1;
    };

    ParamSet() = default;
    explicit ParamSet(NetSpec spec, Eigen::Index aux_size = 0);
    static ParamSet unflatten(const NetSpec& spec, const Vec& flat, Eigen::Index aux_size = 0);

    const NetSpec& spec() const { return spec_; }
    Eigen::Index size() const { return values_.size(); }
    Eigen::Index net_size() const { return values_.size() - aux_size_; }
    Eigen::Index aux_size() const { return aux_size_; }
    const std::vector<LayerOffsets>& index_map() const { return offsets_; }

    Vec flatten() const { return values_; }
    const Vec& values() const { return values_; }
    Vec& mutable_values()
    {
        ++version_;
        return values_;
    }

    Eigen::Map<const Mat> weight(int layer) const;
    Eigen::Map<Mat> weight(int layer);
    Eigen::Map<const Vec> bias(int layer) const;
    Eigen::Map<Vec> bias(int layer);
    Eigen::Map<const Vec> ln_gain(int layer) const;
    Eigen::Map<Vec> ln_gain(int layer);
    Eigen::Map<const Vec> ln_bias(int layer) const;
    Eigen::Map<Vec> ln_bias(int layer);
    Eigen::Map<const Vec> aux() const;
    Eigen::Map<Vec> aux();

    /// Bumped by every mutable access; a tape recorded at another version is stale.
    std::uint64_t version() const { return version_; }

private:
    NetSpec spec_;
    Vec values_;
    Eigen::Index aux_size_ = 0;
    std::vector<LayerOffsets> offsets_;
    std::uint64_t version_ = 0;
};

ParamSet init_params(const NetSpec& spec, std::uint64_t seed, Eigen::Index aux_size = 0);

/// Activation record of a batched forward pass (samples are columns).
struct Tape {
    const ParamSet* params = nullptr;
    std::uint64_t version = 0;
    std::vector<Mat> inputs;
    std::vector<Mat> normalized;
    std::vector<Eigen::RowVectorXd> inv_std;
    std::vector<Mat> preact;
};

/// Batched forward: x is input_dim x batch, result is output_dim x batch.
Mat forward(const ParamSet& params, const Eigen::Ref<const Mat>& x, Tape* tape = nullptr);
Vec forward_one(const ParamSet& params, const Vec& x);

/// Gradient of sum(y .* dy) w.r.t. the flat parameters (aux entries are zero).
/// Optionally also returns the gradient w.r.t. the input batch.
Vec backward(const Tape& tape, const Eigen::Ref<const Mat>& dy, Mat* dx = nullptr);
void backward_accumulate(const Tape& tape, const Eigen::Ref<const Mat>& dy, Eigen::Ref<Vec> grad,
                         Mat* dx = nullptr);

Vec layer_norm(const Vec& x, const Vec& gain, const Vec& bias, double eps = 1e-5);

inline constexpr double kLayerNormEps = 1e-5;

} // namespace offbench::nn
