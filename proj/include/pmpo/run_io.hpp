#pragma once

#include <filesystem>
#include <fstream>

#include "pmpo/optimizer.hpp"

namespace pmpo {

// Persists a run: config.json, history.jsonl (one IterationRecord per line),
// best_prompt.txt, candidates/iter_<t>.jsonl, masks/iter_<t>.json, and raw
// generator transcripts under rewrites/iter_<t>/.
class RunDirectoryWriter : public RunSink {
  public:
    explicit RunDirectoryWriter(std::filesystem::path dir);

    void on_config(const nlohmann::json& config) override;
    void on_mask_report(int iteration, const nlohmann::json& report) override;
    void on_rewrite_transcript(int iteration, const std::string& name, const std::string& request,
                               const std::string& response, bool parsed) override;
    void on_candidates(int iteration, const std::vector<CandidateRecord>& pool) override;
    void on_iteration(const IterationRecord& record) override;
    void on_result(const RunResult& result) override;

    const std::filesystem::path& dir() const { return dir_; }

  private:
    std::filesystem::path dir_;
    std::ofstream history_;
};

// report.csv with columns (iteration, incumbent_loss, best_candidate_loss,
// accepted) and report.json with the full history; losses in nats rendered to
// 6 decimals. Throws IoFailure.
void emit_report(const RunResult& result, const std::filesystem::path& dir);

// Rebuilds report.csv/report.json from a persisted history.jsonl; used by the
// `report` subcommand. Throws FileNotFound, MalformedRecord.
void emit_report_from_run_dir(const std::filesystem::path& run_dir);

std::vector<IterationRecord> load_history(const std::filesystem::path& history_path);

}  // namespace pmpo
