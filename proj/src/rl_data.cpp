#include "simeval/rl_data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "simeval/error.hpp"
#include "simeval/json_io.hpp"
#include "simeval/simulate.hpp"

namespace simeval {

std::string_view to_string(TurnCounting t) {
    switch (t) {
        case TurnCounting::student_slots: return "student_slots";
        case TurnCounting::turn_pairs: return "turn_pairs";
        case TurnCounting::raw_turns: return "raw_turns";
    }
    return "?";
}

TurnCounting turn_counting_from_string(std::string_view s) {
    for (auto t : {TurnCounting::student_slots, TurnCounting::turn_pairs, TurnCounting::raw_turns})
        if (to_string(t) == s) return t;
    throw ParseError("unknown turn counting \"" + std::string(s) + "\"");
}

void RewardConfig::validate() const {
    if (included.empty()) throw PreconditionError("reward config includes no metric");
    if (!(epsilon >= 0.0)) throw PreconditionError("epsilon must be >= 0");
    if (n < 2) throw PreconditionError("n must be >= 2");
}

std::optional<double> aggregate_reward(const MetricReport& r, const RewardConfig& cfg) {
    double sum = 0.0;
    int count = 0;
    for (auto m : cfg.included) {
        const auto& v = r.at(m);
        if (!v.applicable()) continue;
        sum += *v.value;
        ++count;
    }
    if (count == 0) return std::nullopt;
    return std::clamp(sum / count, 0.0, 1.0);
}

int slot_position(const SlotCandidates& s, TurnCounting counting) {
    switch (counting) {
        case TurnCounting::student_slots: return s.student_ordinal;
        case TurnCounting::turn_pairs: return s.pair_index;
        case TurnCounting::raw_turns: return s.turn_index;
    }
    return s.student_ordinal;
}

std::vector<PreferencePair> build_preference_pairs(const SlotCandidates& slot, const RewardConfig& cfg) {
    std::vector<PreferencePair> out;
    if (slot_position(slot, cfg.counting) < cfg.min_turn_pair) return out;
    const auto& c = slot.candidates;
    for (std::size_t i = 0; i < c.size(); ++i) {
        for (std::size_t j = i + 1; j < c.size(); ++j) {
            const bool i_wins = c[i].reward >= c[j].reward;
            const auto& hi = i_wins ? c[i] : c[j];
            const auto& lo = i_wins ? c[j] : c[i];
            const double diff = hi.reward - lo.reward;
            // inclusive: >= up to rounding
            if (cfg.strict ? !(diff > cfg.epsilon) : !(diff >= cfg.epsilon - 1e-12)) continue;
            out.push_back({slot.dialogue_id, slot.turn_index, slot.prompt, hi.text, lo.text, diff});
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.margin > b.margin; });
    return out;
}

void export_pairs(std::vector<PreferencePair> pairs, const std::filesystem::path& path) {
    std::stable_sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
        return std::tie(a.dialogue_id, a.turn_index, b.margin) < std::tie(b.dialogue_id, b.turn_index, a.margin);
    });
    std::vector<json> recs;
    recs.reserve(pairs.size());
    for (const auto& p : pairs) {
        json prompt = json::array();
        for (const auto& m : p.prompt) prompt.push_back({{"role", m.role}, {"content", m.content}});
        recs.push_back({{"prompt", std::move(prompt)}, {"chosen", p.chosen}, {"rejected", p.rejected}, {"margin", p.margin}});
    }
    write_jsonl(path, recs);
}

PairBuildResult build_pairs_from_reports(const Corpus& c, const std::vector<CandidateTurn>& candidates,
                                         const std::vector<MetricReport>& reports, const RewardConfig& cfg) {
    cfg.validate();
    using Key = std::tuple<std::string, int, std::string, int>;
    std::map<Key, const CandidateTurn*> by_key;
    for (const auto& cand : candidates) by_key[{cand.dialogue_id, cand.turn_index, cand.group_key(), cand.sample_id}] = &cand;

    // Slots keyed by (dialogue, turn, system): one system's samples compete with each other.
    std::map<std::tuple<std::string, int, std::string>, SlotCandidates> slots;
    PairBuildResult out;
    const auto sft = SimMethodConfig::defaults(SimMethod::sft_backend);
    for (const auto& r : reports) {
        auto it = by_key.find({r.dialogue_id, r.turn_index, r.group_key(), r.sample_id});
        if (it == by_key.end())
            throw PreconditionError("report " + r.dialogue_id + ":" + std::to_string(r.turn_index) + " sample " +
                                    std::to_string(r.sample_id) + " has no matching candidate");
        auto& slot = slots[{r.dialogue_id, r.turn_index, r.group_key()}];
        if (slot.dialogue_id.empty()) {
            const Dialogue* d = c.find(r.dialogue_id);
            if (!d) throw PreconditionError("report references unknown dialogue " + r.dialogue_id);
            auto s = slot_at(*d, r.turn_index);
            slot.dialogue_id = d->id;
            slot.turn_index = s.turn_index;
            slot.pair_index = s.pair_index;
            slot.student_ordinal = s.student_ordinal;
            SimInputs in;
            in.annotations = c.annotations_for(d->id);
            auto req = render_prompt(sft, *d, s, in);
            slot.prompt.push_back({"system", req.system_prompt});
            for (auto& m : req.messages) slot.prompt.push_back(std::move(m));
        }
        auto reward = aggregate_reward(r, cfg);
        if (!reward) {
            ++out.stats.undefined_rewards;
            continue;
        }
        slot.candidates.push_back({it->second->text, *reward, r.sample_id});
    }
    for (auto& [key, slot] : slots) {
        ++out.stats.slots;
        std::sort(slot.candidates.begin(), slot.candidates.end(),
                  [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });
        if (static_cast<int>(slot.candidates.size()) != cfg.n) ++out.stats.slots_unexpected_count;
        if (slot_position(slot, cfg.counting) < cfg.min_turn_pair) {
            ++out.stats.slots_too_early;
            continue;
        }
        for (auto& p : build_preference_pairs(slot, cfg)) out.pairs.push_back(std::move(p));
    }
    out.stats.pairs = out.pairs.size();
    return out;
}

}  // namespace simeval
