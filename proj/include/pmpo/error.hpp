#pragma once

#include <stdexcept>
#include <string>

namespace pmpo {

enum class Errc {
    // domain / construction
    EmptyPrompt,
    EmptyTarget,
    EmptyCorpus,
    EmptyDataset,
    EmptyLogProbs,
    EmptyPool,
    EmptyExtraction,
    InvalidConfig,
    IndexOutOfRange,
    // backends
    BackendUnavailable,
    ScriptExhausted,
    ContextOverflow,
    ProtocolError,
    AlignmentError,
    // mask / rewrite parsing
    MissingPromptTags,
    TooManyMasks,
    NestedOrOverlappingMasks,
    ReconstructionMismatch,
    // io
    FileNotFound,
    MalformedRecord,
    KindMismatch,
    IoFailure,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
  public:
    Error(Errc code, std::string message, long line = -1)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message),
          code_(code),
          line_(line) {}

    Errc code() const { return code_; }

    // 1-based source line for file-level errors (MalformedRecord), -1 otherwise.
    long line() const { return line_; }

  private:
    Errc code_;
    long line_;
};

}  // namespace pmpo
