// Copyright Contributors to the GridFormer Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <stdexcept>
#include <string>

namespace gridformer {

enum class ErrorKind {
    Dimension,
    Index,
    Domain,
    Contract,
    Numeric,
    Io,
};

const char* to_string(ErrorKind kind);

/// Base class for every error raised by the library. The kind maps onto the
/// error categories used by the command-line exit codes.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what);
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error(ErrorKind::Dimension, what) {}
};

class IndexError : public Error {
public:
    explicit IndexError(const std::string& what) : Error(ErrorKind::Index, what) {}
};

class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error(ErrorKind::Domain, what) {}
};

class ContractError : public Error {
public:
    explicit ContractError(const std::string& what) : Error(ErrorKind::Contract, what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

} // namespace gridformer
