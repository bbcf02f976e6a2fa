#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include "miaudit/attacks.hpp"
#include "miaudit/discredit.hpp"
#include "miaudit/metrics.hpp"

namespace miaudit::audit {

using attacks::AttackContext;
using attacks::ScoreVector;
using discredit::ClaimedMemberList;
using discredit::DiscreditingDataset;
using discredit::DiscreditMethod;
using discredit::PgdConfig;
using metrics::RatioReport;

enum class AuditState { Claimed, Verified, Challenged, Adjudicated };
enum class Verdict { Upheld, Dismissed };

struct JudgeConfig {
    double required_max_fpr = 0.01; // admissibility bar on the auditor's own validation set
    double dismissal_ratio = 10.0;  // FPR inflation at which the case dies

    void validate() const;
};

struct AuditCase {
    AuditState state = AuditState::Claimed;
    ClaimedMemberList claimed;
    double claim_threshold = 0.0; // lowest claimed score
    std::vector<double> validation_nonmember_scores;
    std::optional<std::string> rejection_reason;
    std::optional<DiscreditingDataset> discrediting;
    std::optional<RatioReport> ratio;
    std::optional<Verdict> verdict;
};

// Step 1: the auditor claims the top-n_c scored candidates and discloses its
// nonmember validation scores as proof of the low false-positive rate.
AuditCase auditor_claim(const ScoreVector& candidate_scores, std::span<const int> candidate_labels, std::size_t n_c,
                        std::span<const double> validation_nonmember_scores);

// Step 2: admissibility. Verified when the validation FPR at the claim
// threshold is <= the judge's bar.
bool judge_verify(AuditCase& audit_case, const JudgeConfig& cfg);

struct ChallengeParams {
    std::size_t n_c = 25;
    std::size_t n_n = 3;
    double noise_sigma = 0.0; // generate method; 0 lets the caller pass a precomputed value
    PgdConfig pgd;
    std::uint64_t seed = 0;
    std::size_t workers = 0;
};

// The auditee's side of the protocol. Nothing in this namespace accepts an
// AttackContext, ScoreVector or ShadowEnsemble: the attack is a black box
// from here, and the information barrier is the signature itself.
namespace auditee {
DiscreditingDataset construct_discrediting(const ClaimedMemberList& claimed, const tinynn::DenseNet& victim,
                                           const data::LabeledDataset& ds,
                                           std::span<const std::uint32_t> public_pool_ids, DiscreditMethod method,
                                           const ChallengeParams& params);
} // namespace auditee

// Step 3: attach the auditee's discrediting dataset. An empty challenge
// adjudicates the case immediately as Upheld.
void auditee_challenge(AuditCase& audit_case, const tinynn::DenseNet& victim, const data::LabeledDataset& ds,
                       std::span<const std::uint32_t> public_pool_ids, DiscreditMethod method,
                       const ChallengeParams& params);

// Step 4: the judge re-scores the discrediting set with the auditor's own
// attack and compares false-positive rates at the claim threshold.
Verdict judge_adjudicate(AuditCase& audit_case, const AttackContext& ctx, const JudgeConfig& cfg);

std::string state_name(AuditState s);
std::string verdict_name(Verdict v);

// Case report JSON.
void write_case_report(const AuditCase& audit_case, DiscreditMethod method, const JudgeConfig& cfg,
                       std::uint64_t seed, std::span<const std::filesystem::path> artifacts,
                       const std::filesystem::path& path);

} // namespace miaudit::audit
