#include "amaris/memory.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <fstream>
#include <sstream>

namespace amaris {

std::string to_string(DocKind k) {
    switch (k) {
        case DocKind::analysis: return "analysis";
        case DocKind::chunk_summary: return "chunk_summary";
        case DocKind::step_summary: return "step_summary";
        case DocKind::update_record: return "update_record";
    }
    return "analysis";
}

DocKind doc_kind_from_string(const std::string& s) {
    if (s == "analysis") return DocKind::analysis;
    if (s == "chunk_summary") return DocKind::chunk_summary;
    if (s == "step_summary") return DocKind::step_summary;
    if (s == "update_record") return DocKind::update_record;
    throw Error("schema_mismatch", "unknown document kind '" + s + "'");
}

json MemoryDocument::to_json() const {
    return json{{"doc_id", doc_id},       {"scope", scope.to_json()},
                {"step", step},           {"kind", to_string(kind)},
                {"content", content},     {"text_rendering", text_rendering},
                {"embedding", embedding}};
}

MemoryDocument MemoryDocument::from_json(const json& j) {
    MemoryDocument d;
    d.doc_id = j.at("doc_id").get<std::string>();
    d.scope = ScopeKey::from_json(j.at("scope"));
    d.step = j.at("step").get<int>();
    d.kind = doc_kind_from_string(j.at("kind").get<std::string>());
    d.content = j.at("content");
    d.text_rendering = j.at("text_rendering").get<std::string>();
    d.embedding = j.at("embedding").get<std::vector<float>>();
    return d;
}

std::string make_doc_id(const ScopeKey& scope, int step, DocKind kind, int index) {
    return scope.str() + ":s" + std::to_string(step) + ":" + to_string(kind) + ":" + std::to_string(index);
}

// ---------------------------------------------------------------------------
// Text rendering

namespace {

std::string flat(const json& v) {
    if (v.is_null()) return "none";
    if (v.is_string()) return v.get<std::string>();
    if (v.is_array()) {
        std::string out;
        for (const auto& e : v) {
            if (!out.empty()) out += ", ";
            out += flat(e);
        }
        return out;
    }
    return v.dump();
}

std::string render_summary_fields(const json& c) {
    std::ostringstream os;
    os << "[health] " << flat(c.value("training_health", json(""))) << "\n";
    os << "[phase] " << flat(c.value("learning_phase", json(""))) << "\n";
    os << "[patterns] " << flat(c.value("recurring_patterns", json::array())) << "\n";
    if (c.contains("dominant_hacking_risk")) {
        os << "[hacking_risk] " << flat(c.at("dominant_hacking_risk").value("label", json(nullptr))) << " - "
           << flat(c.at("dominant_hacking_risk").value("evidence", json(""))) << "\n";
    }
    os << "[weakest_rubric] " << flat(c.value("weakest_rubric_id", json(nullptr))) << "\n";
    os << "[saturation] " << flat(c.value("saturation_signs", json(""))) << "\n";
    os << "[plan] " << flat(c.value("provisional_plan", json(""))) << "\n";
    return os.str();
}

}  // namespace

std::string render_document_text(DocKind kind, const json& c) {
    std::ostringstream os;
    os << "[kind] " << to_string(kind) << "\n";
    switch (kind) {
        case DocKind::analysis: {
            if (c.contains("rollout_id")) os << "[rollout] " << flat(c.at("rollout_id")) << "\n";
            if (c.contains("reward_hacking")) {
                const json& rh = c.at("reward_hacking");
                os << "[hacking] detected=" << (rh.value("detected", false) ? "yes" : "no") << " label="
                   << flat(rh.value("behavior_label", json(nullptr))) << " confidence="
                   << flat(rh.value("confidence", json(""))) << " evidence=" << flat(rh.value("evidence", json("")))
                   << "\n";
            }
            if (c.contains("training_stage"))
                os << "[stage] expected=" << (c.at("training_stage").value("expected_for_size", false) ? "yes" : "no")
                   << " " << flat(c.at("training_stage").value("assessment", json(""))) << "\n";
            if (c.contains("rubric_analysis"))
                os << "[rubric] weakest=" << flat(c.at("rubric_analysis").value("weakest_rubric_id", json(nullptr)))
                   << " flaw=" << flat(c.at("rubric_analysis").value("flaw_description", json(""))) << "\n";
            if (c.contains("curriculum"))
                os << "[curriculum] " << flat(c.at("curriculum").value("next_priority", json(""))) << "\n";
            os << "[observations] " << flat(c.value("observations", json(""))) << "\n";
            break;
        }
        case DocKind::chunk_summary: {
            os << "[chunk_index] " << c.value("chunk_index", 0) << "\n";
            os << render_summary_fields(c.value("body", c));
            break;
        }
        case DocKind::step_summary:
            os << render_summary_fields(c);
            break;
        case DocKind::update_record: {
            os << "[strategy] " << flat(c.value("strategy", json(""))) << "\n";
            os << "[resulting_version] " << c.value("resulting_version", 0) << "\n";
            if (c.contains("ops")) {
                os << "[ops]";
                for (const auto& op : c.at("ops")) os << " " << flat(op.value("kind", json("")));
                os << "\n";
            }
            os << "[lesson] " << flat(c.value("lesson_summary", json(""))) << "\n";
            os << "[evidence] " << flat(c.value("evidence_attribution", json(""))) << "\n";
            break;
        }
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Embedders

std::vector<float> FeatureHashEmbedder::embed(const std::string& text) const {
    std::vector<double> acc(dim_, 0.0);
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : to_lower(text)) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            current.push_back(ch);
        } else if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(current);

    auto add = [&](const std::string& feature) {
        uint64_t h = fnv1a64(feature);
        size_t bucket = h % dim_;
        double sign = ((h >> 17) & 1) ? 1.0 : -1.0;
        acc[bucket] += sign;
    };
    for (size_t i = 0; i < tokens.size(); ++i) {
        add(tokens[i]);
        if (i + 1 < tokens.size()) add(tokens[i] + " " + tokens[i + 1]);
    }

    double norm = 0.0;
    for (double v : acc) norm += v * v;
    if (norm == 0.0) {
        // degenerate input still yields a unit vector
        acc[0] = 1.0;
        norm = 1.0;
    }
    norm = std::sqrt(norm);
    std::vector<float> out(dim_);
    for (size_t i = 0; i < dim_; ++i) out[i] = static_cast<float>(acc[i] / norm);
    return out;
}

double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) throw Error("schema_mismatch", "embedding dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// ---------------------------------------------------------------------------
// Store

MemoryStore::MemoryStore(std::shared_ptr<Embedder> embedder) : embedder_(std::move(embedder)) {}

MemoryStore::MemoryStore(std::string path, std::shared_ptr<Embedder> embedder)
    : embedder_(std::move(embedder)), path_(std::move(path)) {
    std::ifstream in(path_);
    if (!in) return;  // fresh store
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const std::exception& e) {
            throw Error("storage_failure",
                        path_ + ":" + std::to_string(line_no) + " does not parse: " + e.what());
        }
        insert_locked(MemoryDocument::from_json(j), /*persist=*/false);
    }
    // rebuild the commit index from loaded documents
    for (const auto& d : docs_) committed_.insert({d.scope.str(), d.step});
}

void MemoryStore::persist_line(const json& line) {
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::app);
    if (!out) throw Error("storage_failure", "cannot append to '" + path_ + "'");
    out << line.dump() << "\n";
}

void MemoryStore::insert_locked(MemoryDocument doc, bool persist) {
    if (by_id_.count(doc.doc_id)) throw Error("storage_failure", "duplicate doc_id '" + doc.doc_id + "'");
    if (!docs_.empty() && doc.embedding.size() != docs_.front().embedding.size())
        throw Error("schema_mismatch", "embedding dimension differs within store");
    if (persist) persist_line(doc.to_json());
    by_id_[doc.doc_id] = docs_.size();
    docs_.push_back(std::move(doc));
}

size_t MemoryStore::commit_step(const ScopeKey& scope, int step, const std::vector<json>& analyses,
                                const std::vector<json>& chunk_summaries, const json& step_summary,
                                const std::optional<json>& update_record) {
    std::unique_lock lock(mu_);
    if (committed_.count({scope.str(), step}))
        throw Error("duplicate_commit", "scope " + scope.str() + " step " + std::to_string(step));

    std::vector<MemoryDocument> staged;
    auto stage = [&](DocKind kind, int index, const json& content) {
        MemoryDocument d;
        d.scope = scope;
        d.step = step;
        d.kind = kind;
        d.content = content;
        d.doc_id = make_doc_id(scope, step, kind, index);
        d.text_rendering = render_document_text(kind, content);
        d.embedding = embedder_->embed(d.text_rendering);
        staged.push_back(std::move(d));
    };
    for (size_t i = 0; i < analyses.size(); ++i) stage(DocKind::analysis, static_cast<int>(i), analyses[i]);
    for (size_t i = 0; i < chunk_summaries.size(); ++i)
        stage(DocKind::chunk_summary, static_cast<int>(i), chunk_summaries[i]);
    stage(DocKind::step_summary, 0, step_summary);
    if (update_record) stage(DocKind::update_record, 0, *update_record);

    for (auto& d : staged) insert_locked(std::move(d), /*persist=*/true);
    committed_.insert({scope.str(), step});
    return staged.size();
}

std::vector<MemoryDocument> MemoryStore::retrieve_static(const ScopeKey& scope, int t, int window) const {
    if (window < 0) throw Error("invalid_argument", "negative static window");
    std::shared_lock lock(mu_);
    std::vector<MemoryDocument> out;
    for (const auto& d : docs_) {
        if (d.kind != DocKind::step_summary || !(d.scope == scope)) continue;
        if (d.step >= t - window && d.step < t) out.push_back(d);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.step < b.step; });
    return out;
}

std::vector<ScoredDocument> MemoryStore::retrieve_semantic(const ScopeKey& scope, const RetrievalQuery& query,
                                                           int top_d) const {
    if (top_d < 1) throw Error("invalid_argument", "top_d must be >= 1");
    std::vector<float> q = embedder_->embed(query.query_text);
    std::shared_lock lock(mu_);
    std::vector<ScoredDocument> scored;
    for (const auto& d : docs_) {
        if (!(d.scope == scope)) continue;
        scored.push_back({d, cosine_similarity(q, d.embedding)});
    }
    std::sort(scored.begin(), scored.end(), [](const ScoredDocument& a, const ScoredDocument& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        if (a.doc.step != b.doc.step) return a.doc.step > b.doc.step;
        return a.doc.doc_id < b.doc.doc_id;
    });
    if (scored.size() > static_cast<size_t>(top_d)) scored.resize(static_cast<size_t>(top_d));
    return scored;
}

RetrievalContext MemoryStore::retrieve_context(const ScopeKey& scope, int t, int window,
                                               const std::vector<RetrievalQuery>& queries, int top_d) const {
    RetrievalContext ctx;
    ctx.static_docs = retrieve_static(scope, t, window);
    std::set<std::string> seen;
    for (const auto& q : queries) {
        for (const auto& hit : retrieve_semantic(scope, q, top_d)) {
            if (seen.insert(hit.doc.doc_id).second) ctx.dynamic_docs.push_back(hit.doc);
        }
    }
    return ctx;
}

std::vector<MemoryDocument> RetrievalContext::union_view() const {
    std::vector<MemoryDocument> out;
    std::set<std::string> seen;
    for (const auto& d : static_docs)
        if (seen.insert(d.doc_id).second) out.push_back(d);
    for (const auto& d : dynamic_docs)
        if (seen.insert(d.doc_id).second) out.push_back(d);
    return out;
}

std::set<std::string> RetrievalContext::static_ids() const {
    std::set<std::string> out;
    for (const auto& d : static_docs) out.insert(d.doc_id);
    return out;
}

std::set<std::string> RetrievalContext::dynamic_ids() const {
    std::set<std::string> out;
    for (const auto& d : dynamic_docs) out.insert(d.doc_id);
    return out;
}

size_t MemoryStore::size() const {
    std::shared_lock lock(mu_);
    return docs_.size();
}

std::vector<MemoryDocument> MemoryStore::all_documents() const {
    std::shared_lock lock(mu_);
    return docs_;
}

std::vector<MemoryDocument> MemoryStore::documents(const std::optional<ScopeKey>& scope, std::optional<int> step,
                                                   std::optional<DocKind> kind) const {
    std::shared_lock lock(mu_);
    std::vector<MemoryDocument> out;
    for (const auto& d : docs_) {
        if (scope && !(d.scope == *scope)) continue;
        if (step && d.step != *step) continue;
        if (kind && d.kind != *kind) continue;
        out.push_back(d);
    }
    return out;
}

std::optional<MemoryDocument> MemoryStore::find(const std::string& doc_id) const {
    std::shared_lock lock(mu_);
    auto it = by_id_.find(doc_id);
    if (it == by_id_.end()) return std::nullopt;
    return docs_[it->second];
}

size_t MemoryStore::export_memory(const std::optional<ScopeKey>& scope_filter, const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("io_error", "cannot write '" + path + "'");
    std::shared_lock lock(mu_);
    size_t n = 0;
    for (const auto& d : docs_) {
        if (scope_filter && !(d.scope == *scope_filter)) continue;
        out << d.to_json().dump() << "\n";
        ++n;
    }
    return n;
}

MemoryStore::ImportResult MemoryStore::import_memory(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("io_error", "cannot open '" + path + "'");
    ImportResult result;
    std::string line;
    size_t line_no = 0;
    std::vector<MemoryDocument> incoming;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const std::exception& e) {
            throw Error("schema_mismatch", path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        MemoryDocument d = MemoryDocument::from_json(j);
        if (d.embedding.size() != embedder_->dimension()) {
            d.embedding = embedder_->embed(d.text_rendering);
            result.reembedded = true;
        }
        incoming.push_back(std::move(d));
    }
    std::unique_lock lock(mu_);
    for (auto& d : incoming) {
        committed_.insert({d.scope.str(), d.step});
        insert_locked(std::move(d), /*persist=*/true);
        ++result.count;
    }
    return result;
}

}  // namespace amaris
