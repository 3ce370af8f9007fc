#include "pmpo/dataset_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pmpo/util.hpp"

namespace pmpo {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string require_string(const ordered_json& j, const char* key, long line) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
        throw Error(Errc::MalformedRecord,
                    "line " + std::to_string(line) + ": missing or non-string field '" + key + "'",
                    line);
    }
    return it->get<std::string>();
}

}  // namespace

Dataset parse_dataset(const std::string& jsonl, std::optional<DatasetKind> kind_hint) {
    std::istringstream in(jsonl);
    std::string line;
    long line_no = 0;

    Dataset dataset;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::MalformedRecord,
                        "line " + std::to_string(line_no) + ": " + e.what(), line_no);
        }
        if (!j.is_object()) {
            throw Error(Errc::MalformedRecord,
                        "line " + std::to_string(line_no) + ": not a JSON object", line_no);
        }

        if (!header_seen) {
            if (!j.contains("kind")) {
                throw Error(Errc::MalformedRecord,
                            "line 1: header object with 'kind' expected", line_no);
            }
            dataset.kind = dataset_kind_from(require_string(j, "kind", line_no));
            if (j.contains("task_description")) {
                dataset.task_description = require_string(j, "task_description", line_no);
            }
            if (kind_hint && *kind_hint != dataset.kind) {
                throw Error(Errc::KindMismatch,
                            std::string("expected ") + dataset_kind_name(*kind_hint) +
                                " dataset, header says " + dataset_kind_name(dataset.kind));
            }
            header_seen = true;
            continue;
        }

        if (dataset.kind == DatasetKind::supervised) {
            if (j.contains("preferred") || j.contains("dispreferred")) {
                throw Error(Errc::KindMismatch, "line " + std::to_string(line_no) +
                                                    ": preference record in a supervised file");
            }
            Example ex;
            ex.id = require_string(j, "id", line_no);
            ex.input = require_string(j, "input", line_no);
            ex.output = require_string(j, "output", line_no);
            if (auto it = j.find("weight"); it != j.end()) {
                if (!it->is_number()) {
                    throw Error(Errc::MalformedRecord,
                                "line " + std::to_string(line_no) + ": weight must be a number",
                                line_no);
                }
                ex.weight = it->get<double>();
            }
            dataset.examples.push_back(std::move(ex));
        } else {
            if (j.contains("output")) {
                throw Error(Errc::KindMismatch, "line " + std::to_string(line_no) +
                                                    ": supervised record in a preference file");
            }
            PreferencePair pair;
            pair.id = require_string(j, "id", line_no);
            pair.input = require_string(j, "input", line_no);
            pair.preferred = require_string(j, "preferred", line_no);
            pair.dispreferred = require_string(j, "dispreferred", line_no);
            dataset.pairs.push_back(std::move(pair));
        }
    }
    if (!header_seen) {
        throw Error(Errc::MalformedRecord, "file has no header line", 1);
    }

    const ValidationReport report = validate_dataset(dataset);
    for (const Finding& f : report.findings) {
        if (f.kind == FindingKind::EmptyDataset) continue;  // legal for split inputs
        // records start on line 2
        throw Error(Errc::MalformedRecord,
                    "record " + std::to_string(f.record_index + 1) + " (" + f.record_id +
                        "): " + f.message,
                    static_cast<long>(f.record_index) + 2);
    }
    return dataset;
}

Dataset load_dataset(const std::filesystem::path& path, std::optional<DatasetKind> kind_hint) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::FileNotFound, "cannot open dataset file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_dataset(buffer.str(), kind_hint);
}

std::string serialize_dataset(const Dataset& dataset) {
    std::string out;
    ordered_json header;
    header["kind"] = dataset_kind_name(dataset.kind);
    header["task_description"] = dataset.task_description;
    out += header.dump();
    out += "\n";
    if (dataset.kind == DatasetKind::supervised) {
        for (const Example& ex : dataset.examples) {
            ordered_json j;
            j["id"] = ex.id;
            j["input"] = ex.input;
            j["output"] = ex.output;
            j["weight"] = ex.weight;
            out += j.dump();
            out += "\n";
        }
    } else {
        for (const PreferencePair& pair : dataset.pairs) {
            ordered_json j;
            j["id"] = pair.id;
            j["input"] = pair.input;
            j["preferred"] = pair.preferred;
            j["dispreferred"] = pair.dispreferred;
            out += j.dump();
            out += "\n";
        }
    }
    return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::IoFailure, "cannot write dataset file " + path.string());
    out << serialize_dataset(dataset);
    if (!out) throw Error(Errc::IoFailure, "write failed for " + path.string());
}

std::string dataset_fingerprint(const Dataset& dataset) {
    return fnv1a_hex(serialize_dataset(dataset));
}

void SplitSpec::validate() const {
    if (!(fraction > 0.0) || fraction > 1.0 || !std::isfinite(fraction)) {
        throw Error(Errc::InvalidConfig, "split fraction must be in (0,1]");
    }
    if (cap == 0) throw Error(Errc::InvalidConfig, "split cap must be positive");
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, const SplitSpec& spec) {
    spec.validate();
    const std::size_t n = dataset.size();
    if (n == 0) throw Error(Errc::EmptyDataset, "cannot split an empty dataset");

    const std::size_t want = static_cast<std::size_t>(
        std::ceil(spec.fraction * static_cast<double>(n)));
    const std::size_t train_n = std::min(std::min(want, spec.cap), n);

    DetRng rng(spec.seed);
    std::vector<std::size_t> picked = sample_indices(n, train_n, rng);
    std::vector<bool> in_train(n, false);
    for (std::size_t i : picked) in_train[i] = true;

    Dataset train, holdout;
    train.kind = holdout.kind = dataset.kind;
    train.task_description = holdout.task_description = dataset.task_description;
    for (std::size_t i = 0; i < n; ++i) {
        if (dataset.kind == DatasetKind::supervised) {
            (in_train[i] ? train : holdout).examples.push_back(dataset.examples[i]);
        } else {
            (in_train[i] ? train : holdout).pairs.push_back(dataset.pairs[i]);
        }
    }
    return {std::move(train), std::move(holdout)};
}

}  // namespace pmpo
