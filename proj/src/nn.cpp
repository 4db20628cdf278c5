#include "offbench/nn.hpp"

#include <cmath>

#include "offbench/errors.hpp"
#include "offbench/rng.hpp"

namespace offbench::nn {

std::string to_string(Activation a)
{
    return a == Activation::relu ? "relu" : "elu";
}

std::string to_string(InitScheme s)
{
    switch (s) {
    case InitScheme::lecun_normal: return "lecun_normal";
    case InitScheme::orthogonal_1_41: return "orthogonal_1.41";
    case InitScheme::orthogonal_0_01: return "orthogonal_0.01";
    }
    return "?";
}

Activation parse_activation(std::string_view s)
{
    if (s == "relu") return Activation::relu;
    if (s == "elu") return Activation::elu;
    throw ConfigError("activation", "unknown activation '" + std::string(s) + "'");
}

InitScheme parse_init_scheme(std::string_view s)
{
    if (s == "lecun_normal") return InitScheme::lecun_normal;
    if (s == "orthogonal_1.41") return InitScheme::orthogonal_1_41;
    if (s == "orthogonal_0.01") return InitScheme::orthogonal_0_01;
    throw ConfigError("init_scheme", "unknown init scheme '" + std::string(s) + "'");
}

void NetSpec::validate() const
{
    if (input_dim < 1) throw ConfigError("input_dim", "must be >= 1");
    if (output_dim < 1) throw ConfigError("output_dim", "must be >= 1");
    if (hidden_dims.empty()) throw ConfigError("hidden_dims", "must be non-empty");
    for (int h : hidden_dims)
        if (h < 1) throw ConfigError("hidden_dims", "all dims must be >= 1");
}

int NetSpec::fan_in(int layer) const
{
    return layer == 0 ? input_dim : hidden_dims[layer - 1];
}

int NetSpec::fan_out(int layer) const
{
    return layer == num_layers() - 1 ? output_dim : hidden_dims[layer];
}

ParamSet::ParamSet(NetSpec spec, Eigen::Index aux_size) : spec_(std::move(spec)), aux_size_(aux_size)
{
    spec_.validate();
    if (aux_size < 0) throw ContractViolation("aux_size must be >= 0");
    Eigen::Index offset = 0;
    const int layers = spec_.num_layers();
    offsets_.resize(layers);
    for (int l = 0; l < layers; ++l) {
        auto& o = offsets_[l];
        o.weight = offset;
        offset += static_cast<Eigen::Index>(spec_.fan_out(l)) * spec_.fan_in(l);
        o.bias = offset;
        offset += spec_.fan_out(l);
        if (spec_.layer_norm && l < layers - 1) {
            o.ln_gain = offset;
            offset += spec_.fan_out(l);
            o.ln_bias = offset;
            offset += spec_.fan_out(l);
        }
    }
    values_ = Vec::Zero(offset + aux_size);
    for (int l = 0; l < layers - 1; ++l)
        if (spec_.layer_norm) ln_gain(l).setOnes();
}

ParamSet ParamSet::unflatten(const NetSpec& spec, const Vec& flat, Eigen::Index aux_size)
{
    ParamSet p(spec, aux_size);
    if (flat.size() != p.size())
        throw ContractViolation("unflatten: expected " + std::to_string(p.size()) + " values, got " +
                                std::to_string(flat.size()));
    p.values_ = flat;
    return p;
}

Eigen::Map<const Mat> ParamSet::weight(int l) const
{
    return {values_.data() + offsets_.at(l).weight, spec_.fan_out(l), spec_.fan_in(l)};
}

Eigen::Map<Mat> ParamSet::weight(int l)
{
    ++version_;
    return {values_.data() + offsets_.at(l).weight, spec_.fan_out(l), spec_.fan_in(l)};
}

Eigen::Map<const Vec> ParamSet::bias(int l) const
{
    return {values_.data() + offsets_.at(l).bias, spec_.fan_out(l)};
}

Eigen::Map<Vec> ParamSet::bias(int l)
{
    ++version_;
    return {values_.data() + offsets_.at(l).bias, spec_.fan_out(l)};
}

Eigen::Map<const Vec> ParamSet::ln_gain(int l) const
{
    if (offsets_.at(l).ln_gain < 0) throw ContractViolation("layer has no layer norm");
    return {values_.data() + offsets_[l].ln_gain, spec_.fan_out(l)};
}

Eigen::Map<Vec> ParamSet::ln_gain(int l)
{
    if (offsets_.at(l).ln_gain < 0) throw ContractViolation("layer has no layer norm");
    ++version_;
    return {values_.data() + offsets_[l].ln_gain, spec_.fan_out(l)};
}

Eigen::Map<const Vec> ParamSet::ln_bias(int l) const
{
    if (offsets_.at(l).ln_bias < 0) throw ContractViolation("layer has no layer norm");
    return {values_.data() + offsets_[l].ln_bias, spec_.fan_out(l)};
}

Eigen::Map<Vec> ParamSet::ln_bias(int l)
{
    if (offsets_.at(l).ln_bias < 0) throw ContractViolation("layer has no layer norm");
    ++version_;
    return {values_.data() + offsets_[l].ln_bias, spec_.fan_out(l)};
}

Eigen::Map<const Vec> ParamSet::aux() const
{
    return {values_.data() + net_size(), aux_size_};
}

Eigen::Map<Vec> ParamSet::aux()
{
    ++version_;
    return {values_.data() + net_size(), aux_size_};
}

namespace {

Mat orthogonal(Rng& rng, int rows, int cols, double scale)
{
    // QR of a Gaussian matrix, sign-corrected so the result is Haar distributed.
    const bool wide = rows < cols;
    const int n = wide ? cols : rows;
    const int k = wide ? rows : cols;
    Mat g = standard_normal(rng, n, k);
    Eigen::HouseholderQR<Mat> qr(g);
    Mat q = qr.householderQ() * Mat::Identity(n, k);
    Mat r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    for (int i = 0; i < k; ++i)
        if (r(i, i) < 0) q.col(i) *= -1.0;
    return scale * (wide ? Mat(q.transpose()) : q);
}

void apply_activation(Activation act, Mat& z)
{
    if (act == Activation::relu)
        z = z.cwiseMax(0.0);
    else
        z = z.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
}

} // namespace

ParamSet init_params(const NetSpec& spec, std::uint64_t seed, Eigen::Index aux_size)
{
    ParamSet p(spec, aux_size);
    Rng rng = make_rng(seed, 0x1417);
    const int layers = spec.num_layers();
    for (int l = 0; l < layers; ++l) {
        const int fin = spec.fan_in(l);
        const int fout = spec.fan_out(l);
        const bool last = l == layers - 1;
        if (last && spec.init != InitScheme::lecun_normal) {
            const double scale = spec.init == InitScheme::orthogonal_1_41 ? 1.41 : 0.01;
            p.weight(l) = orthogonal(rng, fout, fin, scale);
        } else {
            p.weight(l) = standard_normal(rng, fout, fin) * (1.0 / std::sqrt(static_cast<double>(fin)));
        }
    }
    return p;
}

Mat forward(const ParamSet& params, const Eigen::Ref<const Mat>& x, Tape* tape)
{
    const NetSpec& spec = params.spec();
    if (x.rows() != spec.input_dim)
        throw ContractViolation("forward: input has " + std::to_string(x.rows()) + " rows, expected " +
                                std::to_string(spec.input_dim));
    const int layers = spec.num_layers();
    if (tape) {
        tape->params = &params;
        tape->version = params.version();
        tape->inputs.assign(layers, Mat());
        tape->normalized.assign(layers, Mat());
        tape->inv_std.assign(layers, Eigen::RowVectorXd());
        tape->preact.assign(layers, Mat());
    }
    Mat a = x;
    for (int l = 0; l < layers; ++l) {
        Mat z = params.weight(l) * a;
        z.colwise() += params.bias(l);
        if (tape) tape->inputs[l] = std::move(a);
        if (l == layers - 1) return z;
        if (spec.layer_norm) {
            const Eigen::RowVectorXd mean = z.colwise().mean();
            z.rowwise() -= mean;
            const Eigen::RowVectorXd inv_std =
                ((z.array().square().colwise().sum() / static_cast<double>(z.rows())) + kLayerNormEps)
                    .rsqrt()
                    .matrix();
            z.array().rowwise() *= inv_std.array();
            if (tape) {
                tape->normalized[l] = z;
                tape->inv_std[l] = inv_std;
            }
            z.array().colwise() *= params.ln_gain(l).array();
            z.colwise() += params.ln_bias(l);
        }
        if (tape) tape->preact[l] = z;
        apply_activation(spec.activation, z);
        a = std::move(z);
    }
    return a;
}

Vec forward_one(const ParamSet& params, const Vec& x)
{
    return forward(params, x, nullptr).col(0);
}

void backward_accumulate(const Tape& tape, const Eigen::Ref<const Mat>& dy, Eigen::Ref<Vec> grad, Mat* dx)
{
    if (tape.params == nullptr) throw ContractViolation("backward: empty tape");
    const ParamSet& params = *tape.params;
    if (params.version() != tape.version) throw ContractViolation("backward: stale tape (parameters changed)");
    const NetSpec& spec = params.spec();
    if (grad.size() != params.size()) throw ContractViolation("backward: gradient buffer has wrong length");
    const int layers = spec.num_layers();
    const Eigen::Index batch = tape.inputs[0].cols();
    if (dy.rows() != spec.output_dim || dy.cols() != batch)
        throw ContractViolation("backward: upstream gradient shape mismatch");

    const auto& offsets = params.index_map();
    Mat delta = dy;
    for (int l = layers - 1; l >= 0; --l) {
        if (l < layers - 1) {
            // delta holds dL/d(activation output); move through act and LN.
            const Mat& pre = tape.preact[l];
            if (spec.activation == Activation::relu)
                delta.array() *= (pre.array() > 0.0).cast<double>();
            else
                delta.array() *= pre.array().unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
            if (spec.layer_norm) {
                const Mat& xhat = tape.normalized[l];
                const Eigen::Index n = spec.fan_out(l);
                Eigen::Map<Vec>(grad.data() + offsets[l].ln_gain, n) += (delta.cwiseProduct(xhat)).rowwise().sum();
                Eigen::Map<Vec>(grad.data() + offsets[l].ln_bias, n) += delta.rowwise().sum();
                Mat dxhat = delta.array().colwise() * params.ln_gain(l).array();
                const Eigen::RowVectorXd mean_d = dxhat.colwise().mean();
                const Eigen::RowVectorXd mean_dx = dxhat.cwiseProduct(xhat).colwise().mean();
                Mat tmp = dxhat;
                tmp.rowwise() -= mean_d;
                tmp.array() -= xhat.array().rowwise() * mean_dx.array();
                tmp.array().rowwise() *= tape.inv_std[l].array();
                delta = std::move(tmp);
            }
        }
        const Mat& input = tape.inputs[l];
        const Eigen::Index fin = spec.fan_in(l);
        const Eigen::Index fout = spec.fan_out(l);
        Eigen::Map<Mat>(grad.data() + offsets[l].weight, fout, fin).noalias() += delta * input.transpose();
        Eigen::Map<Vec>(grad.data() + offsets[l].bias, fout) += delta.rowwise().sum();
        if (l > 0 || dx != nullptr) {
            Mat next = params.weight(l).transpose() * delta;
            delta = std::move(next);
        }
    }
    if (dx) *dx = std::move(delta);
}

Vec backward(const Tape& tape, const Eigen::Ref<const Mat>& dy, Mat* dx)
{
    if (tape.params == nullptr) throw ContractViolation("backward: empty tape");
    Vec grad = Vec::Zero(tape.params->size());
    backward_accumulate(tape, dy, grad, dx);
    return grad;
}

Vec layer_norm(const Vec& x, const Vec& gain, const Vec& bias, double eps)
{
    if (x.size() != gain.size() || x.size() != bias.size())
        throw ContractViolation("layer_norm: length mismatch");
    const double mean = x.mean();
    const Vec centered = x.array() - mean;
    const double var = centered.squaredNorm() / static_cast<double>(x.size());
    return gain.cwiseProduct(centered / std::sqrt(var + eps)) + bias;
}

} // namespace offbench::nn
