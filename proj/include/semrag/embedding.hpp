#pragma once

#include "semrag/error.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace semrag {

/// Embedding vectors are single precision; all similarity arithmetic
/// accumulates in double.
using Vec = Eigen::VectorXf;

/// Dot product over vector norms, in [-1, 1]. Throws on zero-norm input.
double cosine_similarity(const Vec& u, const Vec& v);

/// 1 - cosine_similarity, in [0, 2]. Throws on zero-norm input.
double cosine_distance(const Vec& u, const Vec& v);

struct ProviderConfig {
    enum class Kind { stub, remote };
    Kind kind = Kind::stub;
    std::string endpoint_url;               // remote: e.g. http://localhost:11434
    std::string model_name = "stub-embed";
    int dim = 64;                           // stub output dimension; remote declared dimension
    int batch_size = 32;
    int timeout_ms = 30000;
    std::uint64_t seed = 0;                 // stub only
    int max_in_flight = 4;                  // concurrent remote batches

    void validate() const;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    /// One vector per input text, order preserving. Deterministic for a fixed
    /// provider configuration. Throws ProviderError identifying the failing
    /// batch on transport or protocol errors.
    virtual std::vector<Vec> embed_texts(const std::vector<std::string>& texts) = 0;

    virtual int dim() const = 0;

    /// Short provenance string recorded in run manifests.
    virtual std::string identity() const = 0;
};

/// Deterministic offline embedder: a seeded 64-bit hash of the text seeds a
/// fixed linear congruential generator, which draws `dim` samples in [-1, 1];
/// the sample vector is L2-normalized. Pure and thread-safe.
class StubEmbedder final : public EmbeddingProvider {
public:
    explicit StubEmbedder(int dim = 64, std::uint64_t seed = 0);

    std::vector<Vec> embed_texts(const std::vector<std::string>& texts) override;
    int dim() const override { return dim_; }
    std::string identity() const override;

    /// Single-text convenience used by tests.
    Vec embed_one(const std::string& text) const;

private:
    int dim_;
    std::uint64_t seed_;
};

/// HTTP provider speaking POST {endpoint}/api/embed with
/// {"model": ..., "input": [...]} -> {"embeddings": [[...], ...]}.
/// Batches requests per config.batch_size, fans batches out over at most
/// config.max_in_flight connections, and reassembles results in input order.
/// Responses are memoized by content hash.
class RemoteEmbedder final : public EmbeddingProvider {
public:
    explicit RemoteEmbedder(ProviderConfig config);
    ~RemoteEmbedder() override;

    std::vector<Vec> embed_texts(const std::vector<std::string>& texts) override;
    int dim() const override;
    std::string identity() const override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::unique_ptr<EmbeddingProvider> make_embedder(const ProviderConfig& config);

} // namespace semrag
