#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "localtrans/tape.hpp"

namespace localtrans {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

// Flat binary container: magic "LTCK", version u32, count u32, then per
// parameter: name length u32, UTF-8 name, rank u32, extents u32[], f64
// little-endian payload.
namespace ckpt {

constexpr std::uint32_t kVersion = 1;

inline void write_u32(std::ofstream& f, std::uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), 4);
}

inline std::uint32_t read_u32(std::ifstream& f, const std::string& path, const char* what) {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    if (f.gcount() != 4) throw DataError(path + ": truncated checkpoint while reading " + what);
    return v;
}

inline void save(const std::string& path, const std::map<std::string, Tensor>& tensors) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError(path + ": cannot open for writing");
    f.write("LTCK", 4);
    write_u32(f, kVersion);
    write_u32(f, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        write_u32(f, static_cast<std::uint32_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(f, static_cast<std::uint32_t>(t.rank()));
        for (int d = 0; d < t.rank(); ++d) write_u32(f, static_cast<std::uint32_t>(t.extent(d)));
        if constexpr (sizeof(scalar) == 8) {
            f.write(reinterpret_cast<const char*>(t.data()),
                    static_cast<std::streamsize>(t.size() * 8));
        } else {
            std::vector<double> tmp(t.size());
            for (std::size_t i = 0; i < t.size(); ++i) tmp[i] = static_cast<double>(t[i]);
            f.write(reinterpret_cast<const char*>(tmp.data()),
                    static_cast<std::streamsize>(tmp.size() * 8));
        }
    }
    if (!f) throw DataError(path + ": write failed");
}

inline std::map<std::string, Tensor> load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(path + ": cannot open");
    char magic[4];
    f.read(magic, 4);
    if (f.gcount() != 4 || std::memcmp(magic, "LTCK", 4) != 0)
        throw DataError(path + ": bad magic, not an LTCK checkpoint");
    const std::uint32_t version = read_u32(f, path, "version");
    if (version != kVersion)
        throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t count = read_u32(f, path, "count");
    std::map<std::string, Tensor> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = read_u32(f, path, "name length");
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        if (f.gcount() != static_cast<std::streamsize>(name_len))
            throw DataError(path + ": truncated checkpoint while reading a name");
        const std::uint32_t rank = read_u32(f, path, "rank");
        if (rank < 1 || rank > 4) throw DataError(path + ": invalid rank for '" + name + "'");
        std::vector<int> extents(rank);
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint32_t e = read_u32(f, path, "extent");
            if (e == 0 || e > (1u << 28)) throw DataError(path + ": invalid extent for '" + name + "'");
            extents[d] = static_cast<int>(e);
        }
        Tensor t(extents);
        std::vector<double> tmp(t.size());
        f.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(tmp.size() * 8));
        if (f.gcount() != static_cast<std::streamsize>(tmp.size() * 8))
            throw DataError(path + ": truncated payload for '" + name + "'");
        for (std::size_t j = 0; j < t.size(); ++j) t[j] = static_cast<scalar>(tmp[j]);
        out.emplace(name, std::move(t));
    }
    return out;
}

} // namespace ckpt

// Owning registry of named parameters with stable addresses.
class ParameterStore {
public:
    Parameter& add(const std::string& name, Tensor value, bool trainable = true) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
        params_.push_back(std::make_unique<Parameter>(name, std::move(value), trainable));
        index_[name] = params_.size() - 1;
        return *params_.back();
    }

    Parameter& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return *params_[it->second];
    }

    std::size_t size() const { return params_.size(); }
    Parameter& at(std::size_t i) { return *params_[i]; }
    const Parameter& at(std::size_t i) const { return *params_[i]; }

    std::size_t total_elements() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p->value.size();
        return n;
    }

    void save(const std::string& path) const {
        std::map<std::string, Tensor> m;
        for (const auto& p : params_) m.emplace(p->name, p->value.clone());
        ckpt::save(path, m);
    }

    // Strict load: names and shapes must match this store exactly.
    void load(const std::string& path) {
        std::map<std::string, Tensor> m = ckpt::load(path);
        if (m.size() != params_.size())
            throw DataError(path + ": checkpoint has " + std::to_string(m.size()) +
                            " parameters, model expects " + std::to_string(params_.size()));
        for (auto& p : params_) {
            auto it = m.find(p->name);
            if (it == m.end()) throw DataError(path + ": missing parameter '" + p->name + "'");
            if (!it->second.same_shape(p->value))
                throw DataError(path + ": shape mismatch for '" + p->name + "': checkpoint " +
                                it->second.shape_str() + " vs model " + p->value.shape_str());
            p->value = std::move(it->second);
        }
    }

    void zero_grads() {
        for (auto& p : params_) p->zero_grad();
    }

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::map<std::string, std::size_t> index_;
};

} // namespace localtrans
