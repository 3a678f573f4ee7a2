// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace iflow {

enum class ErrorCode {
  kParameter,           // invalid argument or configuration
  kRange,               // value does not fit the fixed-point representation
  kDomain,              // value outside a declared function domain
  kDegenerateScale,     // a scale rounds to R = 0 or overflows the coder
  kCompressionFailure,  // an interpolation cell yields R = 0
  kAuxUnderflow,        // decode needed more bits than the stream holds
  kInsufficientAuxBits, // codec ran out of auxiliary bits while encoding
  kCorruptStream,       // decoding produced an inconsistent state
  kModel,               // malformed or unsupported model description
  kHashMismatch,        // container was produced with a different model
  kVersion,             // unsupported format version
  kIo,                  // file or parse failure
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

}  // namespace iflow
