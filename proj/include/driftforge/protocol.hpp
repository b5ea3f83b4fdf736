#pragma once

#include <deque>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "driftforge/error.hpp"

namespace driftforge {

enum class ProtocolMode { Standard, DelayedFeedback };

inline std::string to_string(ProtocolMode m) {
    return m == ProtocolMode::Standard ? "standard" : "delayed";
}

inline ProtocolMode protocol_from_string(const std::string& s) {
    if (s == "standard") return ProtocolMode::Standard;
    if (s == "delayed") return ProtocolMode::DelayedFeedback;
    throw ConfigError("unknown protocol '" + s + "' (expected standard|delayed)");
}

template <class Payload>
struct Issued {
    long round = 0;
    Payload payload;
};

/// What one round makes available. `scored` pairs have complete ground truth and are
/// evaluated and monitored; `train` pairs additionally receive a gradient update.
template <class Payload>
struct Revealed {
    std::vector<Issued<Payload>> scored;
    std::vector<Issued<Payload>> train;
};

/// Round-based revelation schedule.
///
/// Standard: a forecast's target is revealed in the round it is issued and trained on
/// immediately. DelayedFeedback: the target of a forecast issued in round t completes at
/// the end of round t + H - 1, i.e. H rounds after issue. Every round's forecast is scored
/// at that point, but training happens only at the end of rounds H-1, 2H-1, ..., on the
/// forecast completing then, so consecutive training targets do not overlap.
template <class Payload>
class ProtocolState {
  public:
    ProtocolState(ProtocolMode mode, long horizon) : mode_(mode), horizon_(horizon) {
        if (horizon < 1) throw ConfigError("protocol horizon must be positive");
    }

    ProtocolMode mode() const { return mode_; }
    long horizon() const { return horizon_; }
    std::size_t pending() const { return pending_.size(); }
    const std::deque<Issued<Payload>>& pending_items() const { return pending_; }

    Revealed<Payload> advance(long round, Payload issued) {
        if (last_round_ && round != *last_round_ + 1)
            throw ConfigError("protocol rounds must advance by exactly one");
        last_round_ = round;

        Revealed<Payload> out;
        if (mode_ == ProtocolMode::Standard) {
            out.scored.push_back({round, issued});
            out.train.push_back({round, std::move(issued)});
            return out;
        }
        pending_.push_back({round, std::move(issued)});
        while (!pending_.empty() && pending_.front().round + horizon_ - 1 <= round) {
            out.scored.push_back(std::move(pending_.front()));
            pending_.pop_front();
        }
        if ((round + 1) % horizon_ == 0 && !out.scored.empty()) out.train.push_back(out.scored.back());
        return out;
    }

  private:
    ProtocolMode mode_;
    long horizon_;
    std::deque<Issued<Payload>> pending_;
    std::optional<long> last_round_;
};

}  // namespace driftforge
