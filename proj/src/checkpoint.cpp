#include "offbench/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "offbench/errors.hpp"

namespace offbench::nn {

nlohmann::json to_json(const NetSpec& spec)
{
    return {{"input_dim", spec.input_dim},         {"hidden_dims", spec.hidden_dims},
            {"output_dim", spec.output_dim},       {"activation", to_string(spec.activation)},
            {"layer_norm", spec.layer_norm},       {"init", to_string(spec.init)}};
}

NetSpec net_spec_from_json(const nlohmann::json& j)
{
    NetSpec s;
    s.input_dim = j.at("input_dim").get<int>();
    s.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
    s.output_dim = j.at("output_dim").get<int>();
    s.activation = parse_activation(j.at("activation").get<std::string>());
    s.layer_norm = j.at("layer_norm").get<bool>();
    s.init = parse_init_scheme(j.at("init").get<std::string>());
    s.validate();
    return s;
}

namespace {

void put_le(std::ostream& os, double v)
{
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(buf), 8);
}

double get_le(const unsigned char* buf)
{
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params, const nlohmann::json& extra)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
    nlohmann::json header = {{"net_spec", to_json(params.spec())},
                             {"count", params.size()},
                             {"aux", params.aux_size()},
                             {"extra", extra}};
    os << header.dump() << '\n';
    for (Eigen::Index i = 0; i < params.size(); ++i) put_le(os, params.values()[i]);
    if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read checkpoint " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw ParseError(1, "missing checkpoint header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(1, e.what());
    }
    const NetSpec spec = net_spec_from_json(header.at("net_spec"));
    const auto count = header.at("count").get<Eigen::Index>();
    const auto aux = header.value("aux", Eigen::Index{0});
    std::vector<unsigned char> raw(static_cast<std::size_t>(count) * 8);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (is.gcount() != static_cast<std::streamsize>(raw.size()))
        throw SchemaError("checkpoint payload shorter than declared count");
    Vec flat(count);
    for (Eigen::Index i = 0; i < count; ++i) flat[i] = get_le(raw.data() + 8 * i);
    ParamSet params = ParamSet::unflatten(spec, flat, aux);
    return {std::move(params), header.value("extra", nlohmann::json::object())};
}

} // namespace offbench::nn
