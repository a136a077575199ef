#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace securekb {

enum class Facet { api, cause, code };

inline std::string facet_to_string(Facet f)
{
    switch (f) {
        case Facet::api: return "api";
        case Facet::cause: return "cause";
        case Facet::code: return "code";
    }
    return "api";
}

/// One candidate's standing within a single facet's ranked list.
struct FacetScore {
    Facet facet = Facet::api;
    std::string candidate_id;
    double raw_score = 0.0;
    int rank = 0;  // 1-based within the facet
};

struct FusedCandidate {
    std::string candidate_id;
    std::map<Facet, FacetScore> facet_scores;
    double fused_score = 0.0;
};

struct FusionParams {
    std::map<Facet, double> thresholds = {{Facet::api, 4.0},
                                          {Facet::cause, 0.75},
                                          {Facet::code, 0.65}};
    double alpha = 60.0;
    int rank_cap = 10;
};

/// Assigns 1-based ranks by descending raw score; ties break by candidate id
/// ascending.
inline std::vector<FacetScore> rank_facet(Facet facet,
                                          std::vector<std::pair<std::string, double>> scored)
{
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });
    std::vector<FacetScore> out;
    out.reserve(scored.size());
    for (std::size_t i = 0; i < scored.size(); ++i) {
        out.push_back({facet, scored[i].first, scored[i].second, static_cast<int>(i) + 1});
    }
    return out;
}

/// Reciprocal rank fusion with per-facet score thresholds and a rank cap:
/// a candidate contributes 1/(rank + alpha) from each facet where its score
/// strictly exceeds the facet threshold and its rank is within the cap.
/// Candidates gated out of every facet are dropped.
inline std::vector<FusedCandidate>
rrf_fuse(const std::map<Facet, std::vector<FacetScore>>& facet_lists,
         const FusionParams& params = FusionParams{})
{
    if (params.alpha <= 0.0) {
        throw std::invalid_argument("alpha must be positive");
    }
    std::map<std::string, FusedCandidate> by_id;
    for (const auto& [facet, scores] : facet_lists) {
        double threshold = 0.0;
        auto it = params.thresholds.find(facet);
        if (it != params.thresholds.end()) {
            threshold = it->second;
        }
        for (const auto& fs : scores) {
            bool gated_in = fs.raw_score > threshold && fs.rank <= params.rank_cap;
            auto& cand = by_id[fs.candidate_id];
            cand.candidate_id = fs.candidate_id;
            cand.facet_scores[facet] = fs;
            if (gated_in) {
                cand.fused_score += 1.0 / (static_cast<double>(fs.rank) + params.alpha);
            }
        }
    }
    std::vector<FusedCandidate> out;
    for (auto& [id, cand] : by_id) {
        if (cand.fused_score > 0.0) {
            out.push_back(std::move(cand));
        }
    }
    std::sort(out.begin(), out.end(), [](const FusedCandidate& a, const FusedCandidate& b) {
        if (a.fused_score != b.fused_score) {
            return a.fused_score > b.fused_score;
        }
        return a.candidate_id < b.candidate_id;
    });
    return out;
}

}  // namespace securekb
