#pragma once

#include "semrag/embedding.hpp"
#include "semrag/leiden.hpp"
#include "semrag/llm.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

namespace semrag::test {

/// LLM driven by a plain function. Several call sites run requests on worker
/// threads, so the counter is atomic and fn must not mutate shared state when
/// used from a parallel path.
class FnLlm final : public LlmClient {
public:
    explicit FnLlm(std::function<std::string(const LlmRequest&)> f) : fn_(std::move(f)) {}

    std::string complete(const LlmRequest& req) override {
        ++calls;
        return fn_(req);
    }
    std::string identity() const override { return "fn-llm"; }

    std::atomic<int> calls{0};

private:
    std::function<std::string(const LlmRequest&)> fn_;
};

/// Embedder that returns hand-planted vectors for known texts and falls back
/// to the seeded stub for everything else. Planted and stub vectors share one
/// dimension.
class PlantedEmbedder final : public EmbeddingProvider {
public:
    explicit PlantedEmbedder(int dim, std::uint64_t seed = 0) : stub_(dim, seed) {}

    void plant(const std::string& text, Vec v) { planted_[text] = std::move(v); }

    /// Unit vector at angle acos(c) from axis0 in the (axis0, axis1) plane:
    /// cosine against plant_axis(axis0) is exactly c (up to float rounding).
    Vec with_cosine(double c, int axis0 = 0, int axis1 = 1) const {
        Vec v = Vec::Zero(stub_.dim());
        v[axis0] = static_cast<float>(c);
        v[axis1] = static_cast<float>(std::sqrt(std::max(0.0, 1.0 - c * c)));
        return v;
    }

    Vec axis(int i) const {
        Vec v = Vec::Zero(stub_.dim());
        v[i] = 1.0f;
        return v;
    }

    // Callers may embed from worker threads (graph build, point scoring).
    std::vector<Vec> embed_texts(const std::vector<std::string>& texts) override {
        std::lock_guard<std::mutex> lock(mutex_);
        ++calls;
        std::vector<Vec> out;
        out.reserve(texts.size());
        for (const auto& t : texts) {
            auto it = planted_.find(t);
            if (it != planted_.end()) {
                out.push_back(it->second);
            } else {
                out.push_back(stub_.embed_texts({t})[0]);
            }
            texts_seen.push_back(t);
        }
        return out;
    }

    int dim() const override { return stub_.dim(); }
    std::string identity() const override { return "planted"; }

    int calls = 0;
    std::vector<std::string> texts_seen;

private:
    StubEmbedder stub_;
    std::map<std::string, Vec> planted_;
    std::mutex mutex_;
};

/// Unique scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("semrag_test_" + tag + "_" + std::to_string(counter()++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string str(const std::string& name = "") const {
        return name.empty() ? path_.string() : (path_ / name).string();
    }
    const std::filesystem::path& path() const { return path_; }

private:
    static int& counter() {
        static int n = 0;
        return n;
    }
    std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Calls fn with every set partition of {0..n-1} as a membership vector in
/// restricted-growth form. Usable up to n ~ 12.
template <typename Fn>
void for_each_partition(int n, Fn&& fn) {
    std::vector<int> m(n, 0);
    std::vector<int> max_prefix(n, 0); // max_prefix[i] = max(m[0..i-1])
    while (true) {
        fn(static_cast<const std::vector<int>&>(m));
        int i = n - 1;
        while (i > 0 && m[i] == max_prefix[i] + 1) --i;
        if (i == 0) break;
        ++m[i]; // max_prefix[i] depends only on m[0..i-1]: unchanged
        for (int j = i + 1; j < n; ++j) {
            max_prefix[j] = std::max(max_prefix[j - 1], m[j - 1]);
            m[j] = 0;
        }
    }
}

/// Best modularity over every partition, by exhaustive enumeration.
inline double best_modularity_exhaustive(int n, const std::vector<WeightedEdge>& edges,
                                         std::vector<int>* argmax = nullptr) {
    double best = -1e100;
    for_each_partition(n, [&](const std::vector<int>& m) {
        double q = modularity(n, edges, m);
        if (q > best) {
            best = q;
            if (argmax != nullptr) *argmax = m;
        }
    });
    return best;
}

/// Canonical form: relabel communities by first appearance, so partitions
/// compare independently of label choice.
inline std::vector<int> canonical_partition(const std::vector<int>& m) {
    std::map<int, int> relabel;
    std::vector<int> out;
    out.reserve(m.size());
    for (int c : m) {
        auto it = relabel.emplace(c, static_cast<int>(relabel.size())).first;
        out.push_back(it->second);
    }
    return out;
}

} // namespace semrag::test
