#pragma once

#include <deque>
#include <mutex>

#include "pmpo/backend.hpp"

namespace pmpo {

// Deterministic generator replaying a fixed response queue. Sampling params
// and seed are ignored; each call pops the next queued string. Used to make
// the optimization loop a pure function of (config, dataset, script).
class ScriptedGenerator : public GeneratorBackend {
  public:
    explicit ScriptedGenerator(std::vector<std::string> responses);

    const std::string& name() const override { return name_; }
    std::string generate(const std::string& prompt_text, const SamplingParams& params,
                         uint64_t seed) override;
    nlohmann::json descriptor() const override;

    std::size_t remaining() const;
    std::size_t calls_made() const;

  private:
    mutable std::mutex mutex_;
    std::deque<std::string> queue_;
    std::size_t calls_ = 0;
    std::string script_fingerprint_;
    std::string name_ = "scripted";
};

}  // namespace pmpo
