#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace securekb {

using TermMultiset = std::map<std::string, int>;

/// Okapi BM25 over small term-multiset documents. The corpus here is
/// hundreds of rows at most, so scoring is an exact scan.
struct SparseIndex {
    std::map<std::string, TermMultiset> documents;
    std::map<std::string, int> document_frequency;
    double average_doc_length = 0.0;
    double k1 = 1.2;
    double b = 0.75;

    void rebuild_statistics()
    {
        document_frequency.clear();
        long total_len = 0;
        for (const auto& [doc_id, terms] : documents) {
            long len = 0;
            for (const auto& [term, count] : terms) {
                ++document_frequency[term];
                len += count;
            }
            total_len += len;
        }
        average_doc_length =
            documents.empty() ? 0.0
                              : static_cast<double>(total_len)
                                    / static_cast<double>(documents.size());
    }

    void add_document(const std::string& doc_id, TermMultiset terms)
    {
        documents[doc_id] = std::move(terms);
        rebuild_statistics();
    }
};

/// Okapi BM25 with IDF = ln((N - df + 0.5)/(df + 0.5) + 1). Documents with
/// zero score are omitted; ties order by doc_id ascending.
inline std::vector<std::pair<std::string, double>> bm25_score(const SparseIndex& index,
                                                              const TermMultiset& query_terms)
{
    std::vector<std::pair<std::string, double>> results;
    if (query_terms.empty() || index.documents.empty()) {
        return results;
    }
    double n_docs = static_cast<double>(index.documents.size());
    for (const auto& [doc_id, terms] : index.documents) {
        double doc_len = 0;
        for (const auto& [term, count] : terms) {
            doc_len += count;
        }
        double score = 0.0;
        for (const auto& [term, query_count] : query_terms) {
            auto tf_it = terms.find(term);
            if (tf_it == terms.end()) {
                continue;
            }
            double tf = static_cast<double>(tf_it->second);
            double df = 0.0;
            auto df_it = index.document_frequency.find(term);
            if (df_it != index.document_frequency.end()) {
                df = static_cast<double>(df_it->second);
            }
            double idf = std::log((n_docs - df + 0.5) / (df + 0.5) + 1.0);
            double norm = index.k1
                          * (1.0 - index.b
                             + index.b * doc_len
                                   / (index.average_doc_length > 0 ? index.average_doc_length
                                                                   : 1.0));
            score += static_cast<double>(query_count) * idf * (tf * (index.k1 + 1.0))
                     / (tf + norm);
        }
        if (score > 0.0) {
            results.emplace_back(doc_id, score);
        }
    }
    std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });
    return results;
}

/// Serialization for the KB's sparse/api_index.json.
inline nlohmann::json sparse_index_to_json(const SparseIndex& index)
{
    nlohmann::json docs;
    for (const auto& [doc_id, terms] : index.documents) {
        nlohmann::json t;
        for (const auto& [term, count] : terms) {
            t[term] = count;
        }
        docs[doc_id] = t;
    }
    return nlohmann::json{{"k1", index.k1}, {"b", index.b}, {"documents", docs}};
}

inline SparseIndex sparse_index_from_json(const nlohmann::json& j)
{
    SparseIndex index;
    index.k1 = j.value("k1", 1.2);
    index.b = j.value("b", 0.75);
    if (j.contains("documents")) {
        for (const auto& [doc_id, terms] : j["documents"].items()) {
            TermMultiset t;
            for (const auto& [term, count] : terms.items()) {
                t[term] = count.get<int>();
            }
            index.documents[doc_id] = std::move(t);
        }
    }
    index.rebuild_statistics();
    return index;
}

/// Expands qualified API names into query/document terms. With dot-splitting
/// enabled, `yaml.safe_load` contributes the whole name plus each segment.
inline TermMultiset api_terms(const std::vector<std::string>& api_names, bool split_dots)
{
    TermMultiset terms;
    for (const auto& name : api_names) {
        ++terms[name];
        if (!split_dots) {
            continue;
        }
        std::size_t start = 0;
        bool compound = name.find('.') != std::string::npos;
        if (!compound) {
            continue;
        }
        while (start <= name.size()) {
            std::size_t dot = name.find('.', start);
            std::string part = dot == std::string::npos ? name.substr(start)
                                                        : name.substr(start, dot - start);
            if (!part.empty()) {
                ++terms[part];
            }
            if (dot == std::string::npos) {
                break;
            }
            start = dot + 1;
        }
    }
    return terms;
}

}  // namespace securekb
