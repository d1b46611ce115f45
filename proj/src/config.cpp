#include "semrag/config.hpp"

#include "semrag/error.hpp"

#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <variant>

namespace semrag {

namespace {

struct TomlValue {
    std::variant<std::string, std::int64_t, double, bool,
                 std::vector<std::variant<std::string, std::int64_t, double, bool>>>
        data;
    int line = 0;
};

using TomlScalar = std::variant<std::string, std::int64_t, double, bool>;

struct TomlDoc {
    // section -> key -> value; "" is the top-level section
    std::map<std::string, std::map<std::string, TomlValue>> sections;
    std::string path;
};

[[noreturn]] void fail(const std::string& path, int line, const std::string& message) {
    throw ConfigError(path + ":" + std::to_string(line) + ": " + message);
}

bool is_bare_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

std::string parse_quoted(const std::string& s, std::size_t& pos, const std::string& path,
                         int line) {
    std::string out;
    ++pos; // opening quote
    while (pos < s.size() && s[pos] != '"') {
        if (s[pos] == '\\') {
            ++pos;
            if (pos >= s.size()) fail(path, line, "dangling escape in string");
            switch (s[pos]) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case 'r': out += '\r'; break;
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                default: fail(path, line, std::string("unsupported escape \\") + s[pos]);
            }
        } else {
            out += s[pos];
        }
        ++pos;
    }
    if (pos >= s.size()) fail(path, line, "unterminated string");
    ++pos; // closing quote
    return out;
}

TomlScalar parse_scalar(const std::string& s, std::size_t& pos, const std::string& path,
                        int line) {
    if (s[pos] == '"') return parse_quoted(s, pos, path, line);
    std::size_t end = pos;
    while (end < s.size() && s[end] != ',' && s[end] != ']' && s[end] != '#' &&
           !std::isspace(static_cast<unsigned char>(s[end]))) {
        ++end;
    }
    const std::string raw = s.substr(pos, end - pos);
    pos = end;
    if (raw == "true") return true;
    if (raw == "false") return false;
    if (raw.empty()) fail(path, line, "missing value");
    const bool numeric = raw.find_first_not_of("+-0123456789.eE") == std::string::npos;
    if (!numeric) fail(path, line, "unrecognized value '" + raw + "'");
    if (raw.find('.') != std::string::npos || raw.find('e') != std::string::npos ||
        raw.find('E') != std::string::npos) {
        try {
            return std::stod(raw);
        } catch (...) {
            fail(path, line, "malformed number '" + raw + "'");
        }
    }
    try {
        return static_cast<std::int64_t>(std::stoll(raw));
    } catch (...) {
        fail(path, line, "malformed integer '" + raw + "'");
    }
}

void skip_ws(const std::string& s, std::size_t& pos) {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
}

TomlDoc parse_toml(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    TomlDoc doc;
    doc.path = path;
    std::string section;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::size_t pos = 0;
        skip_ws(line, pos);
        if (pos >= line.size() || line[pos] == '#') continue;

        if (line[pos] == '[') {
            const std::size_t close = line.find(']', pos);
            if (close == std::string::npos) fail(path, line_no, "unterminated section header");
            section = line.substr(pos + 1, close - pos - 1);
            if (section.empty()) fail(path, line_no, "empty section name");
            pos = close + 1;
            skip_ws(line, pos);
            if (pos < line.size() && line[pos] != '#') {
                fail(path, line_no, "unexpected text after section header");
            }
            continue;
        }

        std::size_t key_end = pos;
        while (key_end < line.size() && is_bare_char(line[key_end])) ++key_end;
        const std::string key = line.substr(pos, key_end - pos);
        if (key.empty()) fail(path, line_no, "expected a key");
        pos = key_end;
        skip_ws(line, pos);
        if (pos >= line.size() || line[pos] != '=') fail(path, line_no, "expected '='");
        ++pos;
        skip_ws(line, pos);
        if (pos >= line.size()) fail(path, line_no, "missing value");

        TomlValue value;
        value.line = line_no;
        if (line[pos] == '[') {
            ++pos;
            std::vector<TomlScalar> items;
            skip_ws(line, pos);
            while (pos < line.size() && line[pos] != ']') {
                items.push_back(parse_scalar(line, pos, path, line_no));
                skip_ws(line, pos);
                if (pos < line.size() && line[pos] == ',') {
                    ++pos;
                    skip_ws(line, pos);
                }
            }
            if (pos >= line.size()) fail(path, line_no, "unterminated array");
            ++pos;
            value.data = std::move(items);
        } else {
            value.data = std::visit(
                [](auto&& v) -> decltype(TomlValue::data) { return v; },
                TomlScalar(parse_scalar(line, pos, path, line_no)));
        }
        skip_ws(line, pos);
        if (pos < line.size() && line[pos] != '#') {
            fail(path, line_no, "unexpected text after value");
        }
        if (!doc.sections[section].emplace(key, std::move(value)).second) {
            fail(path, line_no, "duplicate key '" + key + "'");
        }
    }
    return doc;
}

class SectionReader {
public:
    SectionReader(const TomlDoc& doc, const std::string& section)
        : doc_(doc), section_(section) {
        const auto it = doc.sections.find(section);
        if (it != doc.sections.end()) entries_ = &it->second;
    }

    ~SectionReader() = default;

    std::string where(const std::string& key) const {
        return doc_.path + ": " + (section_.empty() ? key : section_ + "." + key);
    }

    template <typename T>
    bool get(const std::string& key, T& out) {
        if (!entries_) return false;
        const auto it = entries_->find(key);
        if (it == entries_->end()) return false;
        seen_.insert(key);
        assign(it->second, out, where(key));
        return true;
    }

    void finish() const {
        if (!entries_) return;
        for (const auto& [key, value] : *entries_) {
            if (!seen_.count(key)) {
                throw ConfigError(doc_.path + ":" + std::to_string(value.line) +
                                  ": unknown key '" +
                                  (section_.empty() ? key : section_ + "." + key) + "'");
            }
        }
    }

private:
    static void assign(const TomlValue& v, std::string& out, const std::string& where) {
        if (const auto* s = std::get_if<std::string>(&v.data)) out = *s;
        else throw ConfigError(where + ": expected a string");
    }
    static void assign(const TomlValue& v, bool& out, const std::string& where) {
        if (const auto* b = std::get_if<bool>(&v.data)) out = *b;
        else throw ConfigError(where + ": expected a boolean");
    }
    static void assign(const TomlValue& v, std::int64_t& out, const std::string& where) {
        if (const auto* i = std::get_if<std::int64_t>(&v.data)) out = *i;
        else throw ConfigError(where + ": expected an integer");
    }
    static void assign(const TomlValue& v, int& out, const std::string& where) {
        std::int64_t wide = 0;
        assign(v, wide, where);
        out = static_cast<int>(wide);
    }
    static void assign(const TomlValue& v, std::uint64_t& out, const std::string& where) {
        std::int64_t wide = 0;
        assign(v, wide, where);
        if (wide < 0) throw ConfigError(where + ": expected a non-negative integer");
        out = static_cast<std::uint64_t>(wide);
    }
    static void assign(const TomlValue& v, double& out, const std::string& where) {
        if (const auto* d = std::get_if<double>(&v.data)) out = *d;
        else if (const auto* i = std::get_if<std::int64_t>(&v.data)) {
            out = static_cast<double>(*i);
        } else {
            throw ConfigError(where + ": expected a number");
        }
    }
    static void assign(const TomlValue& v, std::vector<int>& out, const std::string& where) {
        const auto* arr =
            std::get_if<std::vector<TomlScalar>>(&v.data);
        if (!arr) throw ConfigError(where + ": expected an array of integers");
        out.clear();
        for (const auto& item : *arr) {
            if (const auto* i = std::get_if<std::int64_t>(&item)) {
                out.push_back(static_cast<int>(*i));
            } else {
                throw ConfigError(where + ": expected an array of integers");
            }
        }
    }
    static void assign(const TomlValue& v, std::vector<std::string>& out,
                       const std::string& where) {
        const auto* arr =
            std::get_if<std::vector<TomlScalar>>(&v.data);
        if (!arr) throw ConfigError(where + ": expected an array of strings");
        out.clear();
        for (const auto& item : *arr) {
            if (const auto* s = std::get_if<std::string>(&item)) out.push_back(*s);
            else throw ConfigError(where + ": expected an array of strings");
        }
    }

    const TomlDoc& doc_;
    std::string section_;
    const std::map<std::string, TomlValue>* entries_ = nullptr;
    std::set<std::string> seen_;
};

void check_known_sections(const TomlDoc& doc) {
    static const std::set<std::string> known = {"",      "embedding", "llm",  "chunking",
                                                "ingest", "query",     "local", "global",
                                                "graph",  "eval",      "sweep"};
    for (const auto& [name, entries] : doc.sections) {
        if (!known.count(name)) {
            throw ConfigError(doc.path + ": unknown section [" + name + "]");
        }
        (void)entries;
    }
}

std::string choice(const std::string& value, std::initializer_list<const char*> allowed,
                   const std::string& where) {
    for (const char* a : allowed) {
        if (value == a) return value;
    }
    std::string options;
    for (const char* a : allowed) {
        if (!options.empty()) options += " | ";
        options += a;
    }
    throw ConfigError(where + ": must be one of " + options + ", got '" + value + "'");
}

} // namespace

RunConfig RunConfig::load(const std::string& path) {
    const TomlDoc doc = parse_toml(path);
    check_known_sections(doc);

    RunConfig cfg;
    cfg.config_dir = std::filesystem::path(path).parent_path().string();
    if (cfg.config_dir.empty()) cfg.config_dir = ".";

    {
        SectionReader top(doc, "");
        top.get("seed", cfg.seed);
        top.get("out_dir", cfg.out_dir);
        top.finish();
    }
    {
        SectionReader s(doc, "embedding");
        std::string kind = "stub";
        s.get("kind", kind);
        cfg.embedding.kind = choice(kind, {"stub", "remote"}, s.where("kind")) == "stub"
                                 ? ProviderConfig::Kind::stub
                                 : ProviderConfig::Kind::remote;
        s.get("endpoint", cfg.embedding.endpoint_url);
        s.get("model", cfg.embedding.model_name);
        s.get("dim", cfg.embedding.dim);
        s.get("batch_size", cfg.embedding.batch_size);
        s.get("timeout_ms", cfg.embedding.timeout_ms);
        s.get("max_in_flight", cfg.embedding.max_in_flight);
        s.finish();
    }
    {
        SectionReader s(doc, "llm");
        std::string kind = "stub";
        s.get("kind", kind);
        cfg.llm.kind = choice(kind, {"stub", "remote"}, s.where("kind")) == "stub"
                           ? LlmConfig::Kind::stub
                           : LlmConfig::Kind::remote;
        s.get("endpoint", cfg.llm.endpoint_url);
        s.get("model", cfg.llm.model_name);
        s.get("timeout_ms", cfg.llm.timeout_ms);
        s.get("max_in_flight", cfg.llm.max_in_flight);
        s.get("max_retries", cfg.llm.max_retries);
        if (s.get("script", cfg.llm.script_path) && !cfg.llm.script_path.empty()) {
            std::filesystem::path p(cfg.llm.script_path);
            if (p.is_relative()) {
                cfg.llm.script_path = (std::filesystem::path(cfg.config_dir) / p).string();
            }
        }
        if (s.get("stub_mode", cfg.llm.stub_mode)) {
            choice(cfg.llm.stub_mode, {"script", "echo"}, s.where("stub_mode"));
        }
        s.finish();
    }
    {
        SectionReader s(doc, "chunking");
        s.get("buffer", cfg.chunking.buffer_size);
        std::string mode = "percentile";
        if (s.get("threshold_mode", mode)) {
            cfg.chunking.threshold_mode =
                choice(mode, {"absolute", "percentile"}, s.where("threshold_mode")) == "absolute"
                    ? ChunkingConfig::ThresholdMode::absolute
                    : ChunkingConfig::ThresholdMode::percentile;
        }
        s.get("tau", cfg.chunking.tau);
        s.get("percentile", cfg.chunking.percentile);
        s.get("token_limit", cfg.chunking.token_limit);
        s.get("overlap", cfg.chunking.overlap);
        s.get("neighbor_span", cfg.chunking.neighbor_span);
        s.finish();
    }
    {
        SectionReader s(doc, "ingest");
        s.get("merge_duplicates", cfg.ingest_merge_duplicates);
        s.finish();
    }
    {
        SectionReader s(doc, "query");
        if (s.get("mode", cfg.query.mode)) {
            choice(cfg.query.mode, {"naive", "local", "global"}, s.where("mode"));
        }
        s.get("k", cfg.query.k);
        s.get("template", cfg.query.template_id);
        s.get("temperature", cfg.query.answer_temperature);
        s.finish();
    }
    {
        SectionReader s(doc, "local");
        s.get("tau_e", cfg.query.local.tau_e);
        s.get("tau_d", cfg.query.local.tau_d);
        s.get("window_l", cfg.query.local.window_L);
        std::string affinity = "embedding";
        if (s.get("affinity", affinity)) {
            cfg.query.local.affinity =
                choice(affinity, {"embedding", "linkage"}, s.where("affinity")) == "embedding"
                    ? LocalSearchConfig::Affinity::embedding
                    : LocalSearchConfig::Affinity::linkage;
        }
        s.finish();
        cfg.query.local.k = cfg.query.k;
    }
    {
        SectionReader s(doc, "global");
        s.get("top_k_reports", cfg.query.global.top_K_reports);
        s.get("k_points", cfg.query.global.k_points);
        s.get("window_l", cfg.query.global.window_L);
        s.get("rank_weight", cfg.query.global.rank_weight);
        std::string scoring = "llm";
        if (s.get("point_scoring", scoring)) {
            cfg.query.global.point_scoring =
                choice(scoring, {"llm", "embedding"}, s.where("point_scoring")) == "llm"
                    ? GlobalSearchConfig::PointScoring::llm
                    : GlobalSearchConfig::PointScoring::embedding;
        }
        s.finish();
    }
    {
        SectionReader s(doc, "graph");
        s.get("max_levels", cfg.graph.max_levels);
        s.get("max_concurrency", cfg.graph.max_concurrency);
        s.get("description_cap", cfg.graph.description_cap);
        s.finish();
    }
    {
        SectionReader s(doc, "eval");
        s.get("relevancy_questions", cfg.eval.relevancy_questions);
        std::string correctness = "llm";
        if (s.get("correctness", correctness)) {
            cfg.eval.llm_correctness =
                choice(correctness, {"llm", "heuristic"}, s.where("correctness")) == "llm";
        }
        s.get("max_concurrency", cfg.eval.max_concurrency);
        s.finish();
    }
    {
        SectionReader s(doc, "sweep");
        s.get("buffers", cfg.sweep.buffers);
        s.get("modes", cfg.sweep.modes);
        if (s.get("timing", cfg.sweep.timing)) {
            choice(cfg.sweep.timing, {"wall", "zero", "auto"}, s.where("timing"));
        }
        s.finish();
    }

    cfg.embedding.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

void RunConfig::validate() const {
    embedding.validate();
    llm.validate();
    chunking.validate();
    query.local.validate();
    query.global.validate();
    if (query.mode != "naive" && query.mode != "local" && query.mode != "global") {
        throw ConfigError("query.mode must be naive | local | global");
    }
    if (query.k < 0) throw ConfigError("query.k must be >= 0");
    if (graph.max_levels < 1) throw ConfigError("graph.max_levels must be >= 1");
    if (graph.max_concurrency < 1) throw ConfigError("graph.max_concurrency must be >= 1");
    if (graph.description_cap < 1) throw ConfigError("graph.description_cap must be >= 1");
    if (eval.relevancy_questions < 1) {
        throw ConfigError("eval.relevancy_questions must be >= 1");
    }
    if (eval.max_concurrency < 1) throw ConfigError("eval.max_concurrency must be >= 1");
    if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
    for (int b : sweep.buffers) {
        if (b < 0) throw ConfigError("sweep.buffers entries must be >= 0");
    }
    if (sweep.buffers.empty()) throw ConfigError("sweep.buffers must not be empty");
    if (sweep.modes.empty()) throw ConfigError("sweep.modes must not be empty");
    for (const auto& m : sweep.modes) {
        if (m != "naive" && m != "local" && m != "global") {
            throw ConfigError("sweep.modes entries must be naive | local | global");
        }
    }
    if (sweep.timing != "wall" && sweep.timing != "zero" && sweep.timing != "auto") {
        throw ConfigError("sweep.timing must be wall | zero | auto");
    }
}

bool RunConfig::deterministic_timing() const {
    if (sweep.timing == "zero") return true;
    if (sweep.timing == "wall") return false;
    return embedding.kind == ProviderConfig::Kind::stub && llm.kind == LlmConfig::Kind::stub;
}

std::string RunConfig::path_in_out(const std::string& name) const {
    return (std::filesystem::path(out_dir) / name).string();
}

} // namespace semrag
