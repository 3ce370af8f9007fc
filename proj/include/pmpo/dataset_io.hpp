#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>

#include "pmpo/types.hpp"

namespace pmpo {

// JSONL schema: line 1 is a header object {"kind": ..., "task_description": ...};
// every following line is one record.
//   supervised: {"id", "input", "output", "weight"?}
//   preference: {"id", "input", "preferred", "dispreferred"}

// Throws FileNotFound, MalformedRecord(line), KindMismatch. Validation runs
// automatically; findings surface as MalformedRecord.
Dataset load_dataset(const std::filesystem::path& path,
                     std::optional<DatasetKind> kind_hint = std::nullopt);

Dataset parse_dataset(const std::string& jsonl, std::optional<DatasetKind> kind_hint = std::nullopt);

// Canonical serialization; load(serialize(d)) reproduces d.
std::string serialize_dataset(const Dataset& dataset);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

// FNV-1a over the canonical serialization.
std::string dataset_fingerprint(const Dataset& dataset);

// Train/holdout split: train size = min(ceil(fraction * N), cap), sampled
// without replacement by a seeded shuffle.
struct SplitSpec {
    double fraction = 0.2;  // in (0, 1]
    std::size_t cap = 50;
    uint64_t seed = 0;

    void validate() const;
};

// Both halves keep the original record order; train and holdout are disjoint
// and cover the dataset. Throws EmptyDataset, InvalidConfig.
std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, const SplitSpec& spec);

}  // namespace pmpo
