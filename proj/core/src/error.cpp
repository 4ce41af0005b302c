// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#include <gridformer/error.hpp>

namespace gridformer {

const char*
to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Dimension: return "dimension error";
    case ErrorKind::Index: return "index error";
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::Contract: return "contract error";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::Io: return "io error";
    }
    return "error";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

} // namespace gridformer
