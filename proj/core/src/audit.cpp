#include "miaudit/audit.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "miaudit/errors.hpp"

namespace miaudit::audit {

using json = nlohmann::json;

void JudgeConfig::validate() const {
    if (required_max_fpr <= 0.0) throw ConfigError("JudgeConfig: required_max_fpr must be > 0");
    if (dismissal_ratio <= 0.0) throw ConfigError("JudgeConfig: dismissal_ratio must be > 0");
}

std::string state_name(AuditState s) {
    switch (s) {
        case AuditState::Claimed: return "Claimed";
        case AuditState::Verified: return "Verified";
        case AuditState::Challenged: return "Challenged";
        case AuditState::Adjudicated: return "Adjudicated";
    }
    return "unknown";
}

std::string verdict_name(Verdict v) { return v == Verdict::Upheld ? "Upheld" : "Dismissed"; }

AuditCase auditor_claim(const ScoreVector& candidate_scores, std::span<const int> candidate_labels, std::size_t n_c,
                        std::span<const double> validation_nonmember_scores) {
    if (candidate_scores.scores.size() != candidate_labels.size())
        throw DimensionError("auditor_claim: label count mismatch");
    if (n_c == 0 || n_c > candidate_scores.scores.size())
        throw ConfigError("auditor_claim: n_c out of range");

    ClaimedMemberList claimed;
    claimed.source_attack = candidate_scores.attack_id;
    claimed.entries.reserve(candidate_scores.scores.size());
    for (std::size_t i = 0; i < candidate_scores.scores.size(); ++i)
        claimed.entries.push_back(
            {candidate_scores.sample_ids[i], candidate_scores.scores[i], candidate_labels[i]});
    claimed.sort_canonical();
    claimed.entries.resize(n_c);

    AuditCase c;
    c.state = AuditState::Claimed;
    c.claimed = std::move(claimed);
    c.claim_threshold = c.claimed.entries.back().raw_score;
    c.validation_nonmember_scores.assign(validation_nonmember_scores.begin(), validation_nonmember_scores.end());
    return c;
}

bool judge_verify(AuditCase& audit_case, const JudgeConfig& cfg) {
    cfg.validate();
    if (audit_case.state != AuditState::Claimed)
        throw ConfigError("judge_verify: case is " + state_name(audit_case.state) + ", expected Claimed");
    if (audit_case.validation_nonmember_scores.empty()) {
        audit_case.rejection_reason = "no validation scores disclosed";
        return false;
    }
    std::size_t fp = 0;
    for (double s : audit_case.validation_nonmember_scores)
        if (s >= audit_case.claim_threshold) ++fp;
    double fpr = static_cast<double>(fp) / static_cast<double>(audit_case.validation_nonmember_scores.size());
    if (fpr <= cfg.required_max_fpr) {
        audit_case.state = AuditState::Verified;
        return true;
    }
    audit_case.rejection_reason =
        "validation FPR " + std::to_string(fpr) + " above bar " + std::to_string(cfg.required_max_fpr);
    return false;
}

namespace auditee {

DiscreditingDataset construct_discrediting(const ClaimedMemberList& claimed, const tinynn::DenseNet& victim,
                                           const data::LabeledDataset& ds,
                                           std::span<const std::uint32_t> public_pool_ids, DiscreditMethod method,
                                           const ChallengeParams& params) {
    switch (method) {
        case DiscreditMethod::search:
            return discredit::discredit_search(victim, claimed, ds, public_pool_ids, params.n_c, params.n_n);
        case DiscreditMethod::generate: {
            // The decoder is reconstructable from public materials alone
            // (victim encoder + public pool), so training it here keeps the
            // auditee inside its information set.
            zoo::GeneratorModel gen = zoo::train_generator(ds, public_pool_ids, victim, {128, 128},
                                                           [&] {
                                                               tinynn::TrainConfig cfg;
                                                               cfg.epochs = 120;
                                                               cfg.learning_rate = 0.05;
                                                               cfg.decay_epochs = {80, 105};
                                                               cfg.seed = params.seed;
                                                               return cfg;
                                                           }());
            return discredit::discredit_generate(victim, gen, claimed, ds, params.n_c, params.n_n,
                                                 params.noise_sigma, params.seed);
        }
        case DiscreditMethod::adversarial:
            return discredit::discredit_adversarial(victim, claimed, ds, public_pool_ids, params.n_c, params.n_n,
                                                    params.pgd, params.seed, params.workers);
    }
    throw ConfigError("unknown discredit method");
}

} // namespace auditee

void auditee_challenge(AuditCase& audit_case, const tinynn::DenseNet& victim, const data::LabeledDataset& ds,
                       std::span<const std::uint32_t> public_pool_ids, DiscreditMethod method,
                       const ChallengeParams& params) {
    if (audit_case.state != AuditState::Verified)
        throw ConfigError("auditee_challenge: case is " + state_name(audit_case.state) + ", expected Verified");
    DiscreditingDataset dd =
        auditee::construct_discrediting(audit_case.claimed, victim, ds, public_pool_ids, method, params);
    if (dd.size() == 0) {
        // A failed challenge ends the case in the auditor's favor.
        audit_case.state = AuditState::Adjudicated;
        audit_case.verdict = Verdict::Upheld;
        return;
    }
    audit_case.discrediting = std::move(dd);
    audit_case.state = AuditState::Challenged;
}

Verdict judge_adjudicate(AuditCase& audit_case, const AttackContext& ctx, const JudgeConfig& cfg) {
    cfg.validate();
    if (audit_case.state != AuditState::Challenged)
        throw ConfigError("judge_adjudicate: case is " + state_name(audit_case.state) + ", expected Challenged");

    const DiscreditingDataset& dd = *audit_case.discrediting;
    std::vector<std::uint32_t> dd_ids(dd.size());
    for (std::size_t i = 0; i < dd.size(); ++i) dd_ids[i] = static_cast<std::uint32_t>(0x40000000u + i);

    // The judge runs the auditor's own attack on the challenge set rather
    // than trusting either side's numbers.
    ScoreVector dd_scores =
        attacks::score_with(audit_case.claimed.source_attack, ctx, dd.samples, dd.labels, dd_ids);

    double t = audit_case.claim_threshold;
    std::size_t fp_a = 0;
    for (double s : audit_case.validation_nonmember_scores)
        if (s >= t) ++fp_a;
    std::size_t fp_d = 0;
    for (double s : dd_scores.scores)
        if (s >= t) ++fp_d;

    RatioReport report;
    report.threshold = t;
    report.auditor_min_fpr =
        static_cast<double>(fp_a) / static_cast<double>(audit_case.validation_nonmember_scores.size());
    report.discredit_fpr = static_cast<double>(fp_d) / static_cast<double>(dd.size());
    if (report.auditor_min_fpr > 0.0)
        report.ratio = report.discredit_fpr / report.auditor_min_fpr;
    else
        report.ratio = report.discredit_fpr > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;

    audit_case.ratio = report;
    audit_case.verdict = report.ratio >= cfg.dismissal_ratio ? Verdict::Dismissed : Verdict::Upheld;
    audit_case.state = AuditState::Adjudicated;
    return *audit_case.verdict;
}

void write_case_report(const AuditCase& audit_case, DiscreditMethod method, const JudgeConfig& cfg,
                       std::uint64_t seed, std::span<const std::filesystem::path> artifacts,
                       const std::filesystem::path& path) {
    json report;
    report["attack_id"] = attacks::attack_name(audit_case.claimed.source_attack);
    report["n_c"] = audit_case.claimed.entries.size();
    report["claim_threshold"] = audit_case.claim_threshold;
    report["state"] = state_name(audit_case.state);
    report["discredit_method"] = discredit::method_name(method);
    report["judge"] = {{"required_max_fpr", cfg.required_max_fpr}, {"dismissal_ratio", cfg.dismissal_ratio}};
    report["seed"] = seed;
    if (audit_case.rejection_reason) report["rejection_reason"] = *audit_case.rejection_reason;
    if (audit_case.discrediting) report["discredit_size"] = audit_case.discrediting->size();
    if (audit_case.ratio) {
        report["auditor_fpr"] = audit_case.ratio->auditor_min_fpr;
        report["discredit_fpr"] = audit_case.ratio->discredit_fpr;
        report["ratio"] = std::isfinite(audit_case.ratio->ratio) ? json(audit_case.ratio->ratio) : json("inf");
    }
    if (audit_case.verdict) report["verdict"] = verdict_name(*audit_case.verdict);
    json files = json::array();
    for (const auto& a : artifacts) files.push_back(a.string());
    report["artifacts"] = files;

    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for write: " + path.string());
    out << report.dump(2) << "\n";
}

} // namespace miaudit::audit
