#pragma once

#include <list>
#include <mutex>
#include <unordered_map>

#include "pmpo/backend.hpp"

namespace pmpo {

// LRU cache in front of a ScorerBackend, keyed by (backend name, context,
// target). The incumbent prompt is rescored every iteration; the cache keeps
// that rescore (and repeated candidate texts) free while preserving exact
// value equality. Safe under concurrent score_target calls.
class CachingScorer : public ScorerBackend {
  public:
    explicit CachingScorer(std::shared_ptr<ScorerBackend> inner, std::size_t max_entries = 4096);

    const std::string& name() const override { return inner_->name(); }
    BackendCapability capability() const override { return inner_->capability(); }
    TokenLogProbs score_target(const std::string& context,
                               const std::string& target) const override;
    nlohmann::json descriptor() const override { return inner_->descriptor(); }

    std::size_t hits() const;
    std::size_t misses() const;

  private:
    std::shared_ptr<ScorerBackend> inner_;
    std::size_t max_entries_;

    mutable std::mutex mutex_;
    mutable std::list<std::string> lru_;  // most recent at front
    struct Entry {
        TokenLogProbs value;
        std::list<std::string>::iterator lru_it;
    };
    mutable std::unordered_map<std::string, Entry> map_;
    mutable std::size_t hits_ = 0;
    mutable std::size_t misses_ = 0;
};

}  // namespace pmpo
