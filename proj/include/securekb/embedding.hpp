#pragma once

#include "securekb/util.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

namespace securekb {

/// Dense text embedder behind the retrieval indexes. Identity names the
/// provider+model so indexes can reject queries from a different embedder.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::vector<float> embed(const std::string& text) = 0;
    virtual int dimensionality() const = 0;
    virtual std::string identity() const = 0;
};

inline void l2_normalize(std::vector<float>& v)
{
    double norm = 0.0;
    for (float x : v) {
        norm += static_cast<double>(x) * x;
    }
    if (norm <= 0.0) {
        return;
    }
    double inv = 1.0 / std::sqrt(norm);
    for (float& x : v) {
        x = static_cast<float>(x * inv);
    }
}

/// Cosine similarity; zero vectors score 0.
inline double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b)
{
    if (a.size() != b.size() || a.empty()) {
        return 0.0;
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na <= 0.0 || nb <= 0.0) {
        return 0.0;
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Deterministic feature-hashing embedder: lowercased word and trigram
/// features hashed into a fixed number of buckets, L2-normalized. Identical
/// text embeds to the identical vector on every platform.
class HashingEmbeddingProvider : public EmbeddingProvider {
public:
    explicit HashingEmbeddingProvider(int dim = 256) : dim_(dim) {}

    std::vector<float> embed(const std::string& text) override
    {
        std::vector<float> v(static_cast<std::size_t>(dim_), 0.0F);
        auto add_feature = [&](std::string_view feature) {
            std::uint64_t h = fnv1a64(feature);
            std::size_t bucket = static_cast<std::size_t>(h % static_cast<std::uint64_t>(dim_));
            float sign = ((h >> 63) & 1U) != 0U ? -1.0F : 1.0F;
            v[bucket] += sign;
        };
        std::string token;
        auto flush_token = [&]() {
            if (token.empty()) {
                return;
            }
            add_feature(token);
            if (token.size() >= 3) {
                for (std::size_t i = 0; i + 3 <= token.size(); ++i) {
                    add_feature(std::string_view(token).substr(i, 3));
                }
            }
            token.clear();
        };
        for (char c : text) {
            if (is_ident_char(c) || c == '.') {
                token += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            } else {
                flush_token();
            }
        }
        flush_token();
        l2_normalize(v);
        return v;
    }

    int dimensionality() const override { return dim_; }

    std::string identity() const override
    {
        return "hash-fnv1a-" + std::to_string(dim_);
    }

private:
    int dim_;
};

/// Flat vector store persisted as row-major little-endian float32 with a
/// JSON sidecar of ids and dimensionality.
struct VectorTable {
    std::vector<std::string> ids;
    int dim = 0;
    std::vector<float> data;  // ids.size() * dim

    std::vector<float> row(std::size_t i) const
    {
        std::vector<float> out(static_cast<std::size_t>(dim));
        std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(i * static_cast<std::size_t>(dim)),
                    dim, out.begin());
        return out;
    }

    void append(const std::string& id, const std::vector<float>& v)
    {
        ids.push_back(id);
        data.insert(data.end(), v.begin(), v.end());
    }
};

inline void write_vector_table(const std::filesystem::path& bin_path, const VectorTable& table,
                               const std::string& provider_identity)
{
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) {
        throw std::runtime_error("cannot write vector file: " + bin_path.string());
    }
    for (float x : table.data) {
        std::uint32_t bits;
        std::memcpy(&bits, &x, sizeof(bits));
        unsigned char bytes[4] = {static_cast<unsigned char>(bits & 0xFF),
                                  static_cast<unsigned char>((bits >> 8) & 0xFF),
                                  static_cast<unsigned char>((bits >> 16) & 0xFF),
                                  static_cast<unsigned char>((bits >> 24) & 0xFF)};
        bin.write(reinterpret_cast<const char*>(bytes), 4);
    }
    nlohmann::json sidecar{{"ids", table.ids},
                           {"dim", table.dim},
                           {"provider", provider_identity}};
    std::filesystem::path sidecar_path = bin_path;
    sidecar_path += ".json";
    std::ofstream meta(sidecar_path, std::ios::binary);
    meta << sidecar.dump(2) << '\n';
}

inline VectorTable read_vector_table(const std::filesystem::path& bin_path)
{
    std::filesystem::path sidecar_path = bin_path;
    sidecar_path += ".json";
    std::ifstream meta(sidecar_path, std::ios::binary);
    if (!meta) {
        throw std::runtime_error("missing vector sidecar: " + sidecar_path.string());
    }
    nlohmann::json sidecar = nlohmann::json::parse(meta);
    VectorTable table;
    table.ids = sidecar.at("ids").get<std::vector<std::string>>();
    table.dim = sidecar.at("dim").get<int>();

    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) {
        throw std::runtime_error("missing vector file: " + bin_path.string());
    }
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(bin)),
                                     std::istreambuf_iterator<char>());
    std::size_t count = bytes.size() / 4;
    table.data.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits = static_cast<std::uint32_t>(bytes[i * 4])
                             | (static_cast<std::uint32_t>(bytes[i * 4 + 1]) << 8)
                             | (static_cast<std::uint32_t>(bytes[i * 4 + 2]) << 16)
                             | (static_cast<std::uint32_t>(bytes[i * 4 + 3]) << 24);
        float x;
        std::memcpy(&x, &bits, sizeof(x));
        table.data[i] = x;
    }
    if (table.data.size() != table.ids.size() * static_cast<std::size_t>(table.dim)) {
        throw std::runtime_error("vector file size disagrees with sidecar: "
                                 + bin_path.string());
    }
    return table;
}

/// Disk cache keyed by (provider identity, content hash). Rebuilds reuse
/// previously embedded rows instead of calling the provider again.
class CachedEmbedder {
public:
    CachedEmbedder(EmbeddingProvider& provider, std::filesystem::path cache_dir)
        : provider_(provider), cache_dir_(std::move(cache_dir))
    {
    }

    std::vector<float> embed(const std::string& text)
    {
        std::string key = to_hex(fnv1a64(text));
        std::filesystem::path dir = cache_dir_ / provider_.identity();
        std::filesystem::path file = dir / (key + ".vec");
        if (std::filesystem::exists(file)) {
            std::ifstream in(file, std::ios::binary);
            std::vector<float> v(static_cast<std::size_t>(provider_.dimensionality()));
            in.read(reinterpret_cast<char*>(v.data()),
                    static_cast<std::streamsize>(v.size() * sizeof(float)));
            if (in.gcount() == static_cast<std::streamsize>(v.size() * sizeof(float))) {
                return v;
            }
        }
        std::vector<float> v = provider_.embed(text);
        std::filesystem::create_directories(dir);
        std::ofstream out(file, std::ios::binary);
        out.write(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::streamsize>(v.size() * sizeof(float)));
        return v;
    }

    EmbeddingProvider& provider() { return provider_; }

private:
    EmbeddingProvider& provider_;
    std::filesystem::path cache_dir_;
};

}  // namespace securekb
