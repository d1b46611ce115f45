#include "semrag/embedding.hpp"

#include "semrag/hash.hpp"
#include "semrag/util.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <mutex>
#include <sstream>
#include <unordered_map>

namespace semrag {

namespace {

double dot_double(const Vec& u, const Vec& v) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        acc += static_cast<double>(u[i]) * static_cast<double>(v[i]);
    }
    return acc;
}

double norm_double(const Vec& u) {
    return std::sqrt(dot_double(u, u));
}

} // namespace

double cosine_similarity(const Vec& u, const Vec& v) {
    if (u.size() != v.size()) {
        throw Error("cosine_similarity: dimension mismatch (" + std::to_string(u.size()) +
                    " vs " + std::to_string(v.size()) + ")");
    }
    const double nu = norm_double(u);
    const double nv = norm_double(v);
    if (nu == 0.0 || nv == 0.0) {
        throw Error("cosine_similarity: zero-norm vector");
    }
    return dot_double(u, v) / (nu * nv);
}

double cosine_distance(const Vec& u, const Vec& v) {
    return 1.0 - cosine_similarity(u, v);
}

void ProviderConfig::validate() const {
    if (dim < 2) throw ConfigError("embedding dim must be >= 2, got " + std::to_string(dim));
    if (batch_size < 1) throw ConfigError("embedding batch_size must be >= 1");
    if (max_in_flight < 1) throw ConfigError("embedding max_in_flight must be >= 1");
    if (kind == Kind::remote && endpoint_url.empty()) {
        throw ConfigError("remote embedding provider requires endpoint_url");
    }
}

StubEmbedder::StubEmbedder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim_ < 2) throw ConfigError("embedding dim must be >= 2, got " + std::to_string(dim_));
}

Vec StubEmbedder::embed_one(const std::string& text) const {
    // Knuth MMIX multiplier; state advances first, the top 53 bits of each
    // state become one sample in [-1, 1).
    constexpr std::uint64_t kMul = 6364136223846793005ULL;
    constexpr std::uint64_t kInc = 1442695040888963407ULL;
    constexpr double kScale = 1.0 / 9007199254740992.0; // 2^-53

    std::uint64_t state = splitmix64(fnv1a64(text) ^ seed_);
    std::vector<double> samples(static_cast<std::size_t>(dim_));
    for (auto& s : samples) {
        state = state * kMul + kInc;
        const double unit = static_cast<double>(state >> 11) * kScale; // [0, 1)
        s = 2.0 * unit - 1.0;
    }
    double norm = 0.0;
    for (double s : samples) norm += s * s;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw Error("stub embedding collapsed to zero norm");

    Vec out(dim_);
    for (int i = 0; i < dim_; ++i) {
        out[i] = static_cast<float>(samples[static_cast<std::size_t>(i)] / norm);
    }
    return out;
}

std::vector<Vec> StubEmbedder::embed_texts(const std::vector<std::string>& texts) {
    std::vector<Vec> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
}

std::string StubEmbedder::identity() const {
    return "stub-embed(dim=" + std::to_string(dim_) + ",seed=" + std::to_string(seed_) + ")";
}

struct RemoteEmbedder::Impl {
    ProviderConfig config;
    std::mutex memo_mutex;
    std::unordered_map<std::string, Vec> memo;
};

RemoteEmbedder::RemoteEmbedder(ProviderConfig config) : impl_(std::make_unique<Impl>()) {
    config.validate();
    impl_->config = std::move(config);
}

RemoteEmbedder::~RemoteEmbedder() = default;

int RemoteEmbedder::dim() const { return impl_->config.dim; }

std::string RemoteEmbedder::identity() const {
    return "remote-embed(" + impl_->config.endpoint_url + "," + impl_->config.model_name + ")";
}

std::vector<Vec> RemoteEmbedder::embed_texts(const std::vector<std::string>& texts) {
    const auto& cfg = impl_->config;

    // Texts not yet memoized, deduplicated, in first-appearance order.
    std::vector<std::string> pending;
    {
        std::lock_guard<std::mutex> lock(impl_->memo_mutex);
        std::unordered_map<std::string, bool> queued;
        for (const auto& t : texts) {
            if (impl_->memo.count(t) || queued.count(t)) continue;
            queued.emplace(t, true);
            pending.push_back(t);
        }
    }

    if (!pending.empty()) {
        const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
        const std::size_t n_batches = (pending.size() + batch - 1) / batch;
        std::vector<std::vector<Vec>> results(n_batches);
        std::vector<std::string> failures(n_batches);

        // Each batch gets its own connection; httplib clients are not safe to
        // share across threads.
        parallel_for(n_batches, cfg.max_in_flight, [&](std::size_t bi) {
            const std::size_t lo = bi * batch;
            const std::size_t hi = std::min(pending.size(), lo + batch);
            std::ostringstream where;
            where << "embed batch [" << lo << ", " << hi << ")";
            try {
                nlohmann::json body;
                body["model"] = cfg.model_name;
                body["input"] = nlohmann::json::array();
                for (std::size_t i = lo; i < hi; ++i) body["input"].push_back(pending[i]);

                httplib::Client client(cfg.endpoint_url);
                client.set_connection_timeout(0, cfg.timeout_ms * 1000);
                client.set_read_timeout(cfg.timeout_ms / 1000, (cfg.timeout_ms % 1000) * 1000);
                client.set_write_timeout(cfg.timeout_ms / 1000, (cfg.timeout_ms % 1000) * 1000);

                auto res = client.Post("/api/embed", body.dump(), "application/json");
                if (!res) {
                    failures[bi] = where.str() + ": transport error (" +
                                   httplib::to_string(res.error()) + ")";
                    return;
                }
                if (res->status != 200) {
                    failures[bi] = where.str() + ": HTTP " + std::to_string(res->status) +
                                   ": " + res->body.substr(0, 200);
                    return;
                }
                auto parsed = nlohmann::json::parse(res->body, nullptr, false);
                if (parsed.is_discarded() || !parsed.contains("embeddings") ||
                    !parsed["embeddings"].is_array()) {
                    failures[bi] = where.str() + ": malformed response body";
                    return;
                }
                const auto& rows = parsed["embeddings"];
                if (rows.size() != hi - lo) {
                    failures[bi] = where.str() + ": expected " + std::to_string(hi - lo) +
                                   " embeddings, got " + std::to_string(rows.size());
                    return;
                }
                std::vector<Vec> vecs;
                vecs.reserve(rows.size());
                for (const auto& row : rows) {
                    if (!row.is_array() || static_cast<int>(row.size()) != cfg.dim) {
                        failures[bi] = where.str() + ": dimension mismatch, expected " +
                                       std::to_string(cfg.dim) + ", got " +
                                       std::to_string(row.size());
                        return;
                    }
                    Vec v(cfg.dim);
                    for (int j = 0; j < cfg.dim; ++j) {
                        v[j] = row[static_cast<std::size_t>(j)].get<float>();
                    }
                    vecs.push_back(std::move(v));
                }
                results[bi] = std::move(vecs);
            } catch (const std::exception& e) {
                failures[bi] = where.str() + ": " + e.what();
            }
        });

        std::string all_failures;
        for (const auto& f : failures) {
            if (f.empty()) continue;
            if (!all_failures.empty()) all_failures += "; ";
            all_failures += f;
        }
        if (!all_failures.empty()) throw ProviderError(all_failures);

        std::lock_guard<std::mutex> lock(impl_->memo_mutex);
        for (std::size_t bi = 0; bi < n_batches; ++bi) {
            const std::size_t lo = bi * batch;
            for (std::size_t i = 0; i < results[bi].size(); ++i) {
                impl_->memo.emplace(pending[lo + i], std::move(results[bi][i]));
            }
        }
    }

    std::vector<Vec> out;
    out.reserve(texts.size());
    std::lock_guard<std::mutex> lock(impl_->memo_mutex);
    for (const auto& t : texts) out.push_back(impl_->memo.at(t));
    return out;
}

std::unique_ptr<EmbeddingProvider> make_embedder(const ProviderConfig& config) {
    config.validate();
    if (config.kind == ProviderConfig::Kind::stub) {
        return std::make_unique<StubEmbedder>(config.dim, config.seed);
    }
    return std::make_unique<RemoteEmbedder>(config);
}

} // namespace semrag
