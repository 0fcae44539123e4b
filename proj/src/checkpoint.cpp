#include "dipro/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "dipro/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace dipro {

namespace {

constexpr char kMagic[4] = {'D', 'P', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::ifstream& in, const std::string& what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw ParseError("checkpoint: truncated while reading " + what);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ExperimentConfig& config,
                     const ParamStore& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open checkpoint for write: " + path);
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kVersion);
    put<std::uint64_t>(out, config_hash(config));
    const std::string cfg_text = serialize_config(config);
    put<std::uint64_t>(out, cfg_text.size());
    out.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.entries().size()));
    for (const auto& [name, t] : params.entries()) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape().size()));
        for (int d : t.shape()) put<std::int64_t>(out, d);
        out.write(reinterpret_cast<const char*>(t.values().data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw ParseError("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw ParseError("checkpoint: bad magic in " + path);
    }
    LoadedCheckpoint ckpt;
    ckpt.format_version = take<std::uint32_t>(in, "version");
    if (ckpt.format_version != kVersion) {
        throw ParseError("checkpoint: unsupported format version " +
                         std::to_string(ckpt.format_version));
    }
    ckpt.config_hash = take<std::uint64_t>(in, "config hash");
    const auto cfg_len = take<std::uint64_t>(in, "config length");
    ckpt.config_text.resize(cfg_len);
    in.read(ckpt.config_text.data(), static_cast<std::streamsize>(cfg_len));
    if (!in) throw ParseError("checkpoint: truncated config text");
    const auto count = take<std::uint32_t>(in, "parameter count");
    for (std::uint32_t p = 0; p < count; ++p) {
        const auto name_len = take<std::uint32_t>(in, "name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw ParseError("checkpoint: truncated parameter name");
        const auto ndim = take<std::uint32_t>(in, "rank");
        std::vector<int> shape;
        std::size_t numel = 1;
        for (std::uint32_t i = 0; i < ndim; ++i) {
            const auto d = take<std::int64_t>(in, "dim");
            shape.push_back(static_cast<int>(d));
            numel *= static_cast<std::size_t>(d);
        }
        std::vector<double> values(numel);
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(numel * sizeof(double)));
        if (!in) throw ParseError("checkpoint: truncated values for " + name);
        ckpt.params.emplace_back(name, Tensor::from(std::move(shape), std::move(values)));
    }
    return ckpt;
}

void restore_params(ParamStore& store, const LoadedCheckpoint& ckpt) {
    if (store.entries().size() != ckpt.params.size()) {
        throw ContractError("checkpoint: parameter manifest size mismatch");
    }
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
        const auto& [live_name, live] = store.entries()[i];
        const auto& [name, loaded] = ckpt.params[i];
        if (live_name != name || live.shape() != loaded.shape()) {
            throw ContractError("checkpoint: manifest mismatch at '" + name + "'");
        }
        auto dst = const_cast<Tensor&>(live).values_mut();
        std::copy(loaded.values().begin(), loaded.values().end(), dst.begin());
    }
}

std::vector<std::vector<double>> snapshot_values(const ParamStore& store) {
    std::vector<std::vector<double>> snap;
    snap.reserve(store.entries().size());
    for (const auto& [name, t] : store.entries()) {
        snap.emplace_back(t.values().begin(), t.values().end());
    }
    return snap;
}

void restore_values(ParamStore& store, const std::vector<std::vector<double>>& snapshot) {
    if (snapshot.size() != store.entries().size()) {
        throw ContractError("restore_values: snapshot size mismatch");
    }
    for (std::size_t i = 0; i < snapshot.size(); ++i) {
        auto dst = const_cast<Tensor&>(store.entries()[i].second).values_mut();
        if (snapshot[i].size() != dst.size()) {
            throw ContractError("restore_values: parameter size mismatch");
        }
        std::copy(snapshot[i].begin(), snapshot[i].end(), dst.begin());
    }
}

}  // namespace dipro
