#include "pmpo/backend.hpp"

#include "pmpo/cache.hpp"
#include "pmpo/scripted.hpp"
#include "pmpo/util.hpp"

namespace pmpo {

nlohmann::json ScorerBackend::descriptor() const {
    return {{"name", name()}};
}

nlohmann::json GeneratorBackend::descriptor() const {
    return {{"name", name()}};
}

// ---------------------------------------------------------------------------
// ScriptedGenerator
// ---------------------------------------------------------------------------

ScriptedGenerator::ScriptedGenerator(std::vector<std::string> responses) {
    std::string blob;
    for (const std::string& r : responses) {
        blob += r;
        blob.push_back('\0');
    }
    script_fingerprint_ = fnv1a_hex(blob);
    queue_.assign(responses.begin(), responses.end());
}

std::string ScriptedGenerator::generate(const std::string& prompt_text,
                                        const SamplingParams& params, uint64_t seed) {
    (void)prompt_text;
    (void)params;
    (void)seed;
    std::lock_guard<std::mutex> lock(mutex_);
    if (queue_.empty()) {
        throw Error(Errc::ScriptExhausted, "scripted generator queue is empty");
    }
    ++calls_;
    std::string next = std::move(queue_.front());
    queue_.pop_front();
    return next;
}

nlohmann::json ScriptedGenerator::descriptor() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return {{"name", name_}, {"script_fingerprint", script_fingerprint_}};
}

std::size_t ScriptedGenerator::remaining() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return queue_.size();
}

std::size_t ScriptedGenerator::calls_made() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return calls_;
}

// ---------------------------------------------------------------------------
// CachingScorer
// ---------------------------------------------------------------------------

CachingScorer::CachingScorer(std::shared_ptr<ScorerBackend> inner, std::size_t max_entries)
    : inner_(std::move(inner)), max_entries_(max_entries == 0 ? 1 : max_entries) {}

TokenLogProbs CachingScorer::score_target(const std::string& context,
                                          const std::string& target) const {
    std::string key = inner_->name();
    key.push_back('\0');
    key += context;
    key.push_back('\0');
    key += target;

    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = map_.find(key);
        if (it != map_.end()) {
            ++hits_;
            lru_.splice(lru_.begin(), lru_, it->second.lru_it);
            return it->second.value;
        }
    }

    // Compute outside the lock; concurrent duplicate misses are benign since
    // the backend is deterministic.
    TokenLogProbs value = inner_->score_target(context, target);

    std::lock_guard<std::mutex> lock(mutex_);
    ++misses_;
    auto it = map_.find(key);
    if (it == map_.end()) {
        lru_.push_front(key);
        map_.emplace(key, Entry{value, lru_.begin()});
        while (map_.size() > max_entries_) {
            map_.erase(lru_.back());
            lru_.pop_back();
        }
    }
    return value;
}

std::size_t CachingScorer::hits() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return hits_;
}

std::size_t CachingScorer::misses() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return misses_;
}

}  // namespace pmpo
