#pragma once

#include <stdexcept>
#include <string>

namespace siie {

/* Error categories surfaced by the library. The CLI maps them to exit codes. */

class InvalidArgument : public std::invalid_argument {
public:
	using std::invalid_argument::invalid_argument;
};

class InvalidInput : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

class InvalidState : public std::logic_error {
public:
	using std::logic_error::logic_error;
};

class NumericDomainError : public std::domain_error {
public:
	NumericDomainError(const std::string &op, const std::string &what)
		: std::domain_error(op + ": " + what), op_(op) {}
	const std::string &op() const noexcept { return op_; }

private:
	std::string op_;
};

class SingularMatrixError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

class VersionError : public FormatError {
public:
	using FormatError::FormatError;
};

class ParseError : public std::runtime_error {
public:
	ParseError(const std::string &what, std::size_t line)
		: std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
	std::size_t line() const noexcept { return line_; }

private:
	std::size_t line_;
};

class TrainingAbort : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

} // namespace siie
