#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "amaris/common.hpp"
#include "amaris/rubric.hpp"

namespace amaris {

enum class DocKind { analysis, chunk_summary, step_summary, update_record };

std::string to_string(DocKind k);
DocKind doc_kind_from_string(const std::string& s);

/// Typed, embedded, step-stamped unit of the persistent evaluation memory.
struct MemoryDocument {
    std::string doc_id;  // derived from (scope, step, kind, intra-step index)
    ScopeKey scope;
    int step = 0;
    DocKind kind = DocKind::analysis;
    json content;
    std::string text_rendering;
    std::vector<float> embedding;

    json to_json() const;
    static MemoryDocument from_json(const json& j);
};

/// Canonical flat text for embedding: the document's typed fields in a
/// fixed order with labeled headers, stable across serializer changes.
std::string render_document_text(DocKind kind, const json& content);

std::string make_doc_id(const ScopeKey& scope, int step, DocKind kind, int index);

struct RetrievalQuery {
    std::string query_text;
    std::string kind = "other";  // failure_mode | rubric_flaw | curriculum_objective | past_update_failure | other
};

struct ScoredDocument {
    MemoryDocument doc;
    double similarity = 0.0;
};

/// Combined retrieval result handed to the updater: the recency window of
/// step summaries plus the deduplicated union of per-query semantic hits.
struct RetrievalContext {
    std::vector<MemoryDocument> static_docs;
    std::vector<MemoryDocument> dynamic_docs;  // deduped across queries

    std::vector<MemoryDocument> union_view() const;  // dedup across both, static first
    std::set<std::string> static_ids() const;
    std::set<std::string> dynamic_ids() const;
};

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<float> embed(const std::string& text) const = 0;
    virtual size_t dimension() const = 0;
    virtual std::string config_id() const = 0;
};

/// Deterministic feature-hash embedder over word unigrams and bigrams,
/// unit-normalized. The offline/test default; explicitly not a
/// reproduction of any particular embedding model's rankings.
class FeatureHashEmbedder : public Embedder {
public:
    explicit FeatureHashEmbedder(size_t dimension = 256) : dim_(dimension) {}
    std::vector<float> embed(const std::string& text) const override;
    size_t dimension() const override { return dim_; }
    std::string config_id() const override { return "feature_hash_" + std::to_string(dim_); }

private:
    size_t dim_;
};

/// Remote embedding API (POST {base_url}/embeddings, OpenAI-style wire
/// format) for real runs.
class RemoteEmbedder : public Embedder {
public:
    RemoteEmbedder(std::string base_url, std::string api_key, std::string model, size_t dimension);
    std::vector<float> embed(const std::string& text) const override;
    size_t dimension() const override { return dim_; }
    std::string config_id() const override { return "remote_" + model_ + "_" + std::to_string(dim_); }

private:
    std::string base_url_, api_key_, model_;
    size_t dim_;
};

double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b);

/// Append-only document store with an in-memory index rebuilt on open.
/// Reads are concurrent; commits serialize (single writer per scope) and
/// become visible atomically. Documents are never mutated or deleted.
class MemoryStore {
public:
    /// In-memory store (no persistence).
    explicit MemoryStore(std::shared_ptr<Embedder> embedder);
    /// Backed by a JSONL log at `path`; existing documents are loaded.
    MemoryStore(std::string path, std::shared_ptr<Embedder> embedder);

    const Embedder& embedder() const { return *embedder_; }

    /// Inserts one step's artifacts atomically:
    /// analyses + chunk summaries + the step summary + the update record
    /// (absent only when the update stage was skipped). Returns the number
    /// of documents inserted. Throws duplicate_commit / storage_failure.
    size_t commit_step(const ScopeKey& scope, int step, const std::vector<json>& analyses,
                       const std::vector<json>& chunk_summaries, const json& step_summary,
                       const std::optional<json>& update_record);

    /// Step summaries of `scope` with step in [t-N, t), ascending by step.
    std::vector<MemoryDocument> retrieve_static(const ScopeKey& scope, int t, int window) const;

    /// Top-D documents of `scope` by cosine similarity to the query
    /// embedding; ties break by (similarity desc, step desc, doc_id asc).
    std::vector<ScoredDocument> retrieve_semantic(const ScopeKey& scope, const RetrievalQuery& query,
                                                  int top_d) const;

    /// Static window + per-query semantic union, deduplicated by doc_id
    /// (first occurrence wins).
    RetrievalContext retrieve_context(const ScopeKey& scope, int t, int window,
                                      const std::vector<RetrievalQuery>& queries, int top_d) const;

    size_t size() const;
    std::vector<MemoryDocument> all_documents() const;
    std::vector<MemoryDocument> documents(const std::optional<ScopeKey>& scope, std::optional<int> step,
                                          std::optional<DocKind> kind) const;
    std::optional<MemoryDocument> find(const std::string& doc_id) const;

    /// Writes matching documents as JSONL. Returns the count written.
    size_t export_memory(const std::optional<ScopeKey>& scope_filter, const std::string& path) const;

    /// Loads documents from a JSONL file into this store. Embeddings are
    /// recomputed (and the import flagged) when the file's vectors do not
    /// match this store's embedder dimension. Returns the count imported.
    struct ImportResult {
        size_t count = 0;
        bool reembedded = false;
    };
    ImportResult import_memory(const std::string& path);

private:
    void insert_locked(MemoryDocument doc, bool persist);
    void persist_line(const json& line);

    std::shared_ptr<Embedder> embedder_;
    std::string path_;  // empty for in-memory stores
    mutable std::shared_mutex mu_;
    std::vector<MemoryDocument> docs_;
    std::map<std::string, size_t> by_id_;
    std::set<std::pair<std::string, int>> committed_;  // (scope.str(), step)
};

}  // namespace amaris
