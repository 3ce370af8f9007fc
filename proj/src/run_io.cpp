#include "pmpo/run_io.hpp"

#include <charconv>
#include <sstream>

#include "pmpo/util.hpp"

namespace pmpo {

namespace {

namespace fs = std::filesystem;

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::IoFailure, "cannot write " + path.string());
    out << content;
    if (!out) throw Error(Errc::IoFailure, "write failed for " + path.string());
}

// 6-decimal loss rendering shared by report.csv and report.json
double round6(double v) {
    const std::string s = format_fixed_half_even(v, 6);
    double out = v;
    std::from_chars(s.data(), s.data() + s.size(), out);
    return out;
}

// record ids come from user files; keep transcript names path-safe and
// collision-free
std::string sanitize_name(const std::string& name) {
    std::string out;
    out.reserve(name.size());
    bool changed = false;
    for (char c : name) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
        out += ok ? c : '_';
        changed |= !ok;
    }
    if (out.empty()) return "unnamed";
    if (changed) out += "_" + fnv1a_hex(name).substr(0, 8);
    return out;
}

}  // namespace

RunDirectoryWriter::RunDirectoryWriter(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    fs::create_directories(dir_ / "candidates", ec);
    fs::create_directories(dir_ / "masks", ec);
    fs::create_directories(dir_ / "rewrites", ec);
    if (ec) throw Error(Errc::IoFailure, "cannot create run directory " + dir_.string());
    history_.open(dir_ / "history.jsonl", std::ios::binary | std::ios::trunc);
    if (!history_) throw Error(Errc::IoFailure, "cannot open history.jsonl for writing");
}

void RunDirectoryWriter::on_config(const nlohmann::json& config) {
    write_file(dir_ / "config.json", config.dump(2) + "\n");
}

void RunDirectoryWriter::on_mask_report(int iteration, const nlohmann::json& report) {
    write_file(dir_ / "masks" / ("iter_" + std::to_string(iteration) + ".json"),
               report.dump(2) + "\n");
}

void RunDirectoryWriter::on_rewrite_transcript(int iteration, const std::string& name,
                                               const std::string& request,
                                               const std::string& response, bool parsed) {
    const fs::path iter_dir = dir_ / "rewrites" / ("iter_" + std::to_string(iteration));
    std::error_code ec;
    fs::create_directories(iter_dir, ec);
    nlohmann::json j{{"request", request}, {"response", response}, {"parsed", parsed}};
    write_file(iter_dir / (sanitize_name(name) + ".json"), j.dump(2) + "\n");
}

void RunDirectoryWriter::on_candidates(int iteration, const std::vector<CandidateRecord>& pool) {
    std::string lines;
    for (const CandidateRecord& c : pool) {
        lines += c.to_json().dump();
        lines += "\n";
    }
    write_file(dir_ / "candidates" / ("iter_" + std::to_string(iteration) + ".jsonl"), lines);
}

void RunDirectoryWriter::on_iteration(const IterationRecord& record) {
    history_ << record.to_json().dump() << "\n";
    history_.flush();
}

void RunDirectoryWriter::on_result(const RunResult& result) {
    write_file(dir_ / "best_prompt.txt", result.best_prompt.text + "\n");
    write_file(dir_ / "result.json", result.to_json().dump(2) + "\n");
}

namespace {

void emit_report_files(const std::vector<IterationRecord>& history, const fs::path& dir) {
    std::string csv = "iteration,incumbent_loss,best_candidate_loss,accepted\n";
    nlohmann::json jh = nlohmann::json::array();
    for (const IterationRecord& r : history) {
        csv += std::to_string(r.iteration);
        csv += ",";
        csv += r.incumbent_loss_before ? format_fixed_half_even(*r.incumbent_loss_before, 6) : "";
        csv += ",";
        csv += r.best_candidate_loss ? format_fixed_half_even(*r.best_candidate_loss, 6) : "";
        csv += ",";
        csv += r.accepted ? "true" : "false";
        csv += "\n";

        nlohmann::json j = r.to_json();
        if (r.incumbent_loss_before) j["incumbent_loss_before"] = round6(*r.incumbent_loss_before);
        if (r.best_candidate_loss) j["best_candidate_loss"] = round6(*r.best_candidate_loss);
        jh.push_back(std::move(j));
    }
    write_file(dir / "report.csv", csv);
    write_file(dir / "report.json", nlohmann::json{{"history", jh}}.dump(2) + "\n");
}

}  // namespace

void emit_report(const RunResult& result, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(Errc::IoFailure, "cannot create report directory " + dir.string());
    emit_report_files(result.history, dir);
}

std::vector<IterationRecord> load_history(const fs::path& history_path) {
    std::ifstream in(history_path, std::ios::binary);
    if (!in) throw Error(Errc::FileNotFound, "cannot open " + history_path.string());
    std::vector<IterationRecord> history;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::MalformedRecord,
                        "history line " + std::to_string(line_no) + ": " + e.what(), line_no);
        }
        IterationRecord r;
        r.iteration = j.value("iteration", 0);
        if (j.contains("incumbent_loss_before") && !j["incumbent_loss_before"].is_null()) {
            r.incumbent_loss_before = j["incumbent_loss_before"].get<double>();
        }
        if (j.contains("hard_example_ids")) {
            r.hard_example_ids = j["hard_example_ids"].get<std::vector<std::string>>();
        }
        r.num_variants_generated = j.value("num_variants_generated", 0);
        r.num_variants_evaluated = j.value("num_variants_evaluated", 0);
        if (j.contains("best_candidate_loss") && !j["best_candidate_loss"].is_null()) {
            r.best_candidate_loss = j["best_candidate_loss"].get<double>();
        }
        r.accepted = j.value("accepted", false);
        r.incumbent_after = j.value("incumbent_after", std::string());
        if (j.contains("mask_report_ref") && !j["mask_report_ref"].is_null()) {
            r.mask_report_ref = j["mask_report_ref"].get<std::string>();
        }
        if (j.contains("error") && !j["error"].is_null()) {
            r.error = j["error"].get<std::string>();
        }
        history.push_back(std::move(r));
    }
    return history;
}

void emit_report_from_run_dir(const fs::path& run_dir) {
    emit_report_files(load_history(run_dir / "history.jsonl"), run_dir);
}

}  // namespace pmpo
