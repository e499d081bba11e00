#pragma once

#include <stdexcept>
#include <string>

namespace ofpnet {

// Base of every error raised by the library. The CLI maps subclasses onto
// exit codes (see cli.h).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SizeError : public Error {
 public:
  using Error::Error;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

class ColorspaceError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class ReportError : public Error {
 public:
  using Error::Error;
};

// Filesystem and dataset problems.
class DataError : public Error {
 public:
  using Error::Error;
};

class MissingView : public DataError {
 public:
  MissingView(int u, int v, const std::string& dir)
      : DataError("missing view (" + std::to_string(u) + "," +
                  std::to_string(v) + ") in " + dir),
        u_(u),
        v_(v) {}
  int u() const { return u_; }
  int v() const { return v_; }

 private:
  int u_;
  int v_;
};

class InconsistentViews : public DataError {
 public:
  using DataError::DataError;
};

class EmptyDataset : public DataError {
 public:
  using DataError::DataError;
};

class SplitError : public DataError {
 public:
  using DataError::DataError;
};

// Training hit a non-finite loss. `dump_path` names the provenance file
// written before the throw (empty if it could not be written).
class AbortWithDiagnostics : public Error {
 public:
  AbortWithDiagnostics(const std::string& what, std::string dump_path)
      : Error(what), dump_path_(std::move(dump_path)) {}
  const std::string& dump_path() const { return dump_path_; }

 private:
  std::string dump_path_;
};

}  // namespace ofpnet
