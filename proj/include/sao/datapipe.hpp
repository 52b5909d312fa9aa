#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sao/rng.hpp"
#include "sao/types.hpp"

namespace sao::data {

enum class Source { freesound, fma };

struct RecordingMetadata {
    Source source = Source::freesound;
    std::optional<std::string> title, description;
    std::vector<std::string> tags;
    // FMA only
    std::optional<std::string> year, album, artist;
    std::vector<std::string> genres;

    void validate() const;
    // Field names that carry a value, in canonical order.
    std::vector<std::string> present_fields() const;
    // One JSON object, e.g. {"source":"fma","year":"2021","genres":["rock"]}.
    static RecordingMetadata from_json(const std::string& line);
};

std::vector<RecordingMetadata> load_metadata_jsonl(const std::filesystem::path& path);

enum class CaseMode { as_is, upper, lower };

// Every random decision behind one prompt.
struct PromptChoices {
    std::vector<std::string> fields;  // selected fields, in output order
    // Per selected list field, the order its values are emitted in; a field
    // missing here keeps its stored order.
    std::vector<std::pair<std::string, std::vector<size_t>>> list_orders;
    CaseMode case_mode = CaseMode::as_is;
    bool keyed = false;  // "key: value" rendering, FMA only
};

std::string render_prompt(const RecordingMetadata& md, const PromptChoices& choices);

struct PromptOverrides {
    std::optional<bool> keyed;
    std::optional<CaseMode> case_mode;
};

PromptChoices sample_prompt_choices(const RecordingMetadata& md, Rng& rng, const PromptOverrides& overrides = {});
std::string build_prompt(const RecordingMetadata& md, uint64_t rng_seed, const PromptOverrides& overrides = {});

// Per-frame tag probabilities at a fixed hop.
struct TagTimeline {
    std::vector<std::string> tags;
    Matrix probs;  // [frames, tags]
    double hop_seconds = 1.0;

    void validate() const;
    // CSV with a header row of tag names and one row of probabilities per frame.
    static TagTimeline load_csv(const std::filesystem::path& path, double hop_seconds);
};

bool detect_music(const TagTimeline& timeline, const std::set<std::string>& music_tags, double threshold = 0.15,
                  double min_seconds = 30.0);

struct EmbeddingIndex {
    std::vector<std::string> ids;
    Matrix vectors;  // [n, d], unit rows

    size_t size() const { return ids.size(); }
    int64_t dim() const { return vectors.cols(); }
    void validate() const;
    // Normalizes each row of `raw`.
    static EmbeddingIndex from_raw(std::vector<std::string> ids, Matrix raw);
    // Tensor container with an "embeddings" tensor [n, d] and a sidecar
    // "<file>.ids" listing one id per line.
    static EmbeddingIndex load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
};

inline constexpr double kDefaultDedupThreshold = 0.99;

// Connected components of the cosine >= threshold graph, singletons dropped.
// Members ascend; groups are ordered by their first member.
std::vector<std::vector<size_t>> dedup_scan(const EmbeddingIndex& idx, double sim_threshold = kDefaultDedupThreshold);

struct MemorizationCandidate {
    std::string gen_id;
    std::string train_id;
    double cosine = 0.0;
};

std::vector<MemorizationCandidate> memorization_candidates(const EmbeddingIndex& gen, const EmbeddingIndex& train,
                                                           size_t k = 50);

}  // namespace sao::data
