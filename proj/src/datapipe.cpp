#include "sao/datapipe.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>
#include <numeric>
#include <sstream>

#include "sao/container.hpp"
#include "sao/error.hpp"

namespace sao::data {

using json = nlohmann::json;

namespace {

bool has(const std::optional<std::string>& s) { return s && !s->empty(); }

const std::optional<std::string>* scalar_field(const RecordingMetadata& md, const std::string& name) {
    if (name == "title") return &md.title;
    if (name == "description") return &md.description;
    if (name == "year") return &md.year;
    if (name == "album") return &md.album;
    if (name == "artist") return &md.artist;
    return nullptr;
}

const std::vector<std::string>* list_field(const RecordingMetadata& md, const std::string& name) {
    if (name == "tags") return &md.tags;
    if (name == "genres") return &md.genres;
    return nullptr;
}

std::string apply_case(std::string s, CaseMode mode) {
    if (mode == CaseMode::upper)
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    if (mode == CaseMode::lower)
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::filesystem::path sidecar(const std::filesystem::path& p, const char* ext) {
    auto q = p;
    q += ext;
    return q;
}

}  // namespace

std::vector<std::string> RecordingMetadata::present_fields() const {
    static const std::vector<std::string> freesound{"description", "title", "tags"};
    static const std::vector<std::string> fma{"year", "genres", "album", "title", "artist", "tags"};
    std::vector<std::string> out;
    for (const auto& f : source == Source::fma ? fma : freesound) {
        if (const auto* s = scalar_field(*this, f); s && has(*s)) out.push_back(f);
        if (const auto* l = list_field(*this, f); l && !l->empty()) out.push_back(f);
    }
    return out;
}

void RecordingMetadata::validate() const {
    if (present_fields().empty()) throw DataError("recording metadata has no non-empty field");
    for (const auto* l : {&tags, &genres})
        for (const auto& v : *l)
            if (v.empty()) throw DataError("empty value in metadata list");
}

RecordingMetadata RecordingMetadata::from_json(const std::string& line) {
    RecordingMetadata md;
    try {
        const auto j = json::parse(line);
        const std::string src = j.value("source", "freesound");
        if (src == "fma") md.source = Source::fma;
        else if (src == "freesound") md.source = Source::freesound;
        else throw DataError("unknown metadata source \"" + src + "\"");
        auto str = [&](const char* key, std::optional<std::string>& out) {
            if (!j.contains(key) || j[key].is_null()) return;
            out = j[key].is_string() ? j[key].get<std::string>() : j[key].dump();
        };
        str("title", md.title);
        str("description", md.description);
        str("year", md.year);
        str("album", md.album);
        str("artist", md.artist);
        if (j.contains("tags")) md.tags = j["tags"].get<std::vector<std::string>>();
        if (j.contains("genres")) md.genres = j["genres"].get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw DataError(std::string("bad metadata record: ") + e.what());
    }
    md.validate();
    return md;
}

std::vector<RecordingMetadata> load_metadata_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open metadata file " + path.string());
    std::vector<RecordingMetadata> out;
    size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(RecordingMetadata::from_json(line));
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::string render_prompt(const RecordingMetadata& md, const PromptChoices& choices) {
    md.validate();
    if (choices.fields.empty()) throw DataError("prompt needs at least one field");
    if (choices.keyed && md.source != Source::fma) throw DataError("keyed prompts are only built for FMA metadata");
    std::vector<std::string> parts;
    for (const auto& f : choices.fields) {
        std::string value;
        if (const auto* s = scalar_field(md, f)) {
            if (!has(*s)) throw DataError("field \"" + f + "\" is empty");
            value = **s;
        } else if (const auto* l = list_field(md, f)) {
            if (l->empty()) throw DataError("field \"" + f + "\" is empty");
            std::vector<size_t> order(l->size());
            std::iota(order.begin(), order.end(), 0);
            for (const auto& [name, perm] : choices.list_orders)
                if (name == f) order = perm;
            std::vector<std::string> vals;
            for (size_t i : order) {
                if (i >= l->size()) throw std::invalid_argument("list order index out of range for \"" + f + "\"");
                vals.push_back((*l)[i]);
            }
            value = join(vals, ", ");
        } else {
            throw DataError("unknown metadata field \"" + f + "\"");
        }
        parts.push_back(choices.keyed ? f + ": " + value : value);
    }
    return apply_case(join(parts, ", "), choices.case_mode);
}

PromptChoices sample_prompt_choices(const RecordingMetadata& md, Rng& rng, const PromptOverrides& overrides) {
    md.validate();
    const auto present = md.present_fields();
    PromptChoices c;
    while (c.fields.empty())
        for (const auto& f : present)
            if (rng.bernoulli(0.5)) c.fields.push_back(f);
    rng.shuffle(c.fields.begin(), c.fields.end());
    for (const auto& f : c.fields)
        if (const auto* l = list_field(md, f)) {
            std::vector<size_t> order(l->size());
            std::iota(order.begin(), order.end(), 0);
            rng.shuffle(order.begin(), order.end());
            c.list_orders.emplace_back(f, std::move(order));
        }
    c.case_mode = static_cast<CaseMode>(rng.below(3));
    c.keyed = md.source == Source::fma && rng.bernoulli(0.5);
    if (overrides.case_mode) c.case_mode = *overrides.case_mode;
    if (overrides.keyed) c.keyed = *overrides.keyed && md.source == Source::fma;
    return c;
}

std::string build_prompt(const RecordingMetadata& md, uint64_t rng_seed, const PromptOverrides& overrides) {
    Rng rng(rng_seed);
    return render_prompt(md, sample_prompt_choices(md, rng, overrides));
}

void TagTimeline::validate() const {
    if (probs.rows() == 0) throw DataError("tag timeline is empty");
    if (static_cast<size_t>(probs.cols()) != tags.size()) throw DataError("tag timeline header and rows disagree");
    if (!(hop_seconds > 0)) throw DataError("tag timeline hop must be positive");
    if (!probs.allFinite() || probs.minCoeff() < 0 || probs.maxCoeff() > 1)
        throw DataError("tag probabilities must lie in [0, 1]");
}

TagTimeline TagTimeline::load_csv(const std::filesystem::path& path, double hop_seconds) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open tag timeline " + path.string());
    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) {
            cell.erase(0, cell.find_first_not_of(" \t\r"));
            cell.erase(cell.find_last_not_of(" \t\r") + 1);
            cells.push_back(cell);
        }
        return cells;
    };
    TagTimeline t;
    t.hop_seconds = hop_seconds;
    std::string line;
    if (!std::getline(in, line)) throw DataError("tag timeline is empty: " + path.string());
    t.tags = split(line);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split(line);
        if (cells.size() != t.tags.size()) throw DataError("tag timeline row has wrong column count: " + path.string());
        std::vector<double> row;
        for (const auto& c : cells) {
            try {
                row.push_back(std::stod(c));
            } catch (const std::exception&) {
                throw DataError("non-numeric tag probability \"" + c + "\" in " + path.string());
            }
        }
        rows.push_back(std::move(row));
    }
    t.probs.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.tags.size()));
    for (size_t r = 0; r < rows.size(); ++r)
        for (size_t c = 0; c < rows[r].size(); ++c) t.probs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    t.validate();
    return t;
}

bool detect_music(const TagTimeline& timeline, const std::set<std::string>& music_tags, double threshold, double min_seconds) {
    timeline.validate();
    std::vector<Eigen::Index> cols;
    for (size_t i = 0; i < timeline.tags.size(); ++i)
        if (music_tags.count(timeline.tags[i])) cols.push_back(static_cast<Eigen::Index>(i));
    if (cols.empty()) return false;
    int64_t active = 0;
    for (Eigen::Index r = 0; r < timeline.probs.rows(); ++r) {
        double best = 0.0;
        for (auto c : cols) best = std::max(best, timeline.probs(r, c));
        if (best >= threshold) ++active;
    }
    // Tolerates hop values like 0.1 s whose products land just under a bound.
    return static_cast<double>(active) * timeline.hop_seconds >= min_seconds - 1e-9;
}

void EmbeddingIndex::validate() const {
    if (static_cast<size_t>(vectors.rows()) != ids.size()) throw DataError("embedding index: id count differs from row count");
    if (!vectors.allFinite()) throw DataError("embedding index contains non-finite values");
    for (Eigen::Index r = 0; r < vectors.rows(); ++r)
        if (std::abs(vectors.row(r).norm() - 1.0) > 1e-5) throw DataError("embedding row \"" + ids[static_cast<size_t>(r)] + "\" is not unit-norm");
    std::set<std::string> seen;
    for (const auto& id : ids)
        if (!seen.insert(id).second) throw DataError("duplicate embedding id \"" + id + "\"");
}

EmbeddingIndex EmbeddingIndex::from_raw(std::vector<std::string> ids, Matrix raw) {
    for (Eigen::Index r = 0; r < raw.rows(); ++r) {
        const double n = raw.row(r).norm();
        if (!(n > 0)) throw DataError("cannot normalize a zero embedding");
        raw.row(r) /= n;
    }
    EmbeddingIndex idx{std::move(ids), std::move(raw)};
    idx.validate();
    return idx;
}

EmbeddingIndex EmbeddingIndex::load(const std::filesystem::path& path) {
    const auto c = io::TensorContainer::load(path);
    const Tensor& t = c.get("embeddings");
    if (t.ndim() != 2) throw DataError("embeddings must be [n, d] in " + path.string());
    std::ifstream in(sidecar(path, ".ids"));
    if (!in) throw DataError("missing id sidecar " + sidecar(path, ".ids").string());
    std::vector<std::string> ids;
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) ids.push_back(line);
    // Stored payloads are float32, so renormalize rather than reject.
    return from_raw(std::move(ids), to_matrix(t));
}

void EmbeddingIndex::save(const std::filesystem::path& path) const {
    validate();
    io::TensorContainer c;
    c.manifest = R"({"type":"embedding_index"})";
    c.put("embeddings", to_tensor(vectors));
    c.save(path);
    std::ofstream out(sidecar(path, ".ids"), std::ios::trunc);
    if (!out) throw DataError("cannot write " + sidecar(path, ".ids").string());
    for (const auto& id : ids) out << id << '\n';
}

std::vector<std::vector<size_t>> dedup_scan(const EmbeddingIndex& idx, double sim_threshold) {
    idx.validate();
    const size_t n = idx.size();
    std::vector<size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    constexpr Eigen::Index kBlock = 512;
    for (Eigen::Index b = 0; b < idx.vectors.rows(); b += kBlock) {
        const Eigen::Index rows = std::min(kBlock, idx.vectors.rows() - b);
        const Matrix sims = idx.vectors.middleRows(b, rows) * idx.vectors.transpose();
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = b + i + 1; j < sims.cols(); ++j)
                if (sims(i, j) >= sim_threshold) {
                    const size_t a = find(static_cast<size_t>(b + i)), c = find(static_cast<size_t>(j));
                    if (a != c) parent[std::max(a, c)] = std::min(a, c);
                }
    }
    std::map<size_t, std::vector<size_t>> groups;
    for (size_t i = 0; i < n; ++i) groups[find(i)].push_back(i);
    std::vector<std::vector<size_t>> out;
    for (auto& [root, members] : groups)
        if (members.size() > 1) out.push_back(std::move(members));
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
    return out;
}

std::vector<MemorizationCandidate> memorization_candidates(const EmbeddingIndex& gen, const EmbeddingIndex& train, size_t k) {
    gen.validate();
    train.validate();
    if (gen.size() == 0 || train.size() == 0) return {};
    if (gen.dim() != train.dim())
        throw DataError("embedding dims differ: " + std::to_string(gen.dim()) + " vs " + std::to_string(train.dim()));
    const Matrix sims = gen.vectors * train.vectors.transpose();
    std::vector<MemorizationCandidate> best;
    best.reserve(gen.size());
    for (Eigen::Index i = 0; i < sims.rows(); ++i) {
        size_t arg = 0;
        for (Eigen::Index j = 1; j < sims.cols(); ++j) {
            const double s = sims(i, j), cur = sims(i, static_cast<Eigen::Index>(arg));
            if (s > cur || (s == cur && train.ids[static_cast<size_t>(j)] < train.ids[arg])) arg = static_cast<size_t>(j);
        }
        best.push_back({gen.ids[static_cast<size_t>(i)], train.ids[arg], sims(i, static_cast<Eigen::Index>(arg))});
    }
    std::sort(best.begin(), best.end(), [](const auto& a, const auto& b) {
        if (a.cosine != b.cosine) return a.cosine > b.cosine;
        if (a.gen_id != b.gen_id) return a.gen_id < b.gen_id;
        return a.train_id < b.train_id;
    });
    if (best.size() > k) best.resize(k);
    return best;
}

}  // namespace sao::data
