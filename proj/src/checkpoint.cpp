#include "moelab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace moelab {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'O', 'E', 'C', 'K', 'P', 'T', '1'};

void write_doubles(std::ofstream& out, const double* p, std::size_t n) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_doubles(std::ifstream& in, double* p, std::size_t n) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint truncated");
}

} // namespace

void save_checkpoint(const MoELayer& layer, const std::string& path,
                     std::uint64_t seed_provenance) {
    layer.check_shapes();
    const auto& c = layer.config;
    nlohmann::json header = {
        {"format", "moe-checkpoint"},
        {"version", 1},
        {"endianness", "little"},
        {"dtype", "float64"},
        {"order", "column-major"},
        {"seed_provenance", seed_provenance},
        {"config",
         {{"m", c.m},
          {"k", c.k},
          {"w", c.w},
          {"d", c.d},
          {"activation", to_string(c.activation)},
          {"gating", to_string(c.gating)},
          {"route_bias", c.route_bias}}},
        {"arrays",
         {{"routing", {c.m, c.d}}, {"bias", {c.m}}, {"A", {c.m, c.d, c.w}}, {"B", {c.m, c.d, c.w}}}},
    };
    std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    out.write(kMagic, 8);
    std::uint64_t len = hs.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    write_doubles(out, layer.routing.data(), static_cast<std::size_t>(layer.routing.size()));
    write_doubles(out, layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
    for (const auto& a : layer.A) write_doubles(out, a.data(), static_cast<std::size_t>(a.size()));
    for (const auto& b : layer.B) write_doubles(out, b.data(), static_cast<std::size_t>(b.size()));
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

nlohmann::json read_checkpoint_header(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("not a moe checkpoint: " + path);
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 8);
    std::string hs(len, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(len));
    if (!in) throw std::runtime_error("checkpoint header truncated: " + path);
    return nlohmann::json::parse(hs);
}

MoELayer load_checkpoint(const std::string& path) {
    nlohmann::json header = read_checkpoint_header(path);
    if (header.value("endianness", "") != "little")
        throw std::runtime_error("unsupported checkpoint endianness");
    const auto& jc = header.at("config");
    MoEConfig cfg = make_config(jc.at("m"), jc.at("k"), jc.at("w"), jc.at("d"),
                                activation_from_string(jc.at("activation")),
                                gating_from_string(jc.at("gating")),
                                jc.at("route_bias").get<bool>());

    std::ifstream in(path, std::ios::binary);
    in.seekg(8);
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 8);
    in.seekg(16 + static_cast<std::streamoff>(len));

    MoELayer layer = MoELayer::zeros(cfg);
    read_doubles(in, layer.routing.data(), static_cast<std::size_t>(layer.routing.size()));
    read_doubles(in, layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
    for (auto& a : layer.A) read_doubles(in, a.data(), static_cast<std::size_t>(a.size()));
    for (auto& b : layer.B) read_doubles(in, b.data(), static_cast<std::size_t>(b.size()));
    layer.check_shapes();
    return layer;
}

} // namespace moelab
