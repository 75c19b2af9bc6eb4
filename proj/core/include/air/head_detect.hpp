// Copyright (c) 2026 The air-toolkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Retrieval-head detection: copy events (token appears in the needle span
// and receives the head's maximal attention there), per-head recall scores,
// and selection of the critical head set.

#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "air/corpus.hpp"
#include "air/forward.hpp"
#include "air/model.hpp"

namespace air {

/// Copy events of one sample: for every head (flat layer*num_heads+head
/// index) the sorted distinct prompt positions inside the needle span whose
/// token the head copied.
struct HeadEvents {
    std::vector<std::vector<std::size_t>> positions;
};

/// Scans a teacher-forced trace over prompt + output. For output token j the
/// attention row at the query position predicting it is inspected; a head
/// earns an event iff the token value occurs in the needle span and some
/// argmax position of the row holds that value inside the needle span.
/// Exact argmax ties credit the lowest qualifying position.
HeadEvents copy_events(const ForwardTrace& trace, const Sample& sample);

/// Per-head retrieval score: mean over samples of
/// |distinct needle positions with events| / |needle|.
std::vector<double> retrieval_scores(const ModelConfig& config,
                                     std::span<const HeadEvents> per_sample_events,
                                     std::span<const Sample> samples);

/// The max(1, ceil(delta * |H|)) heads with the highest scores; ties break
/// by (higher score, lower layer, lower head). delta must lie in (0, 1).
std::vector<HeadId> select_critical_heads(std::span<const double> scores,
                                          const ModelConfig& config, double delta);

struct HeadReport {
    double delta = 0.0;
    std::size_t samples_evaluated = 0;
    struct Entry {
        HeadId head;
        double retrieval_score = 0.0;
        std::size_t events = 0;  // total events across samples
        bool critical = false;
    };
    std::vector<Entry> heads;  // sorted by (layer, head)

    std::vector<HeadId> critical_heads() const;
};

/// Teacher-forced detection over a corpus (every sample needs a needle).
HeadReport detect_heads(const Parameters& params, std::span<const Sample> samples,
                        double delta);

/// Head report JSON:
///   {"delta": f, "samples_evaluated": n,
///    "heads": [{"layer": l, "head": h, "retrieval_score": r,
///               "events": n, "critical": b}, ...]}
void write_head_report(const HeadReport& report, std::ostream& out);
void write_head_report(const HeadReport& report, const std::string& path);
HeadReport read_head_report(std::istream& in, const std::string& source_name);
HeadReport read_head_report(const std::string& path);

}  // namespace air
