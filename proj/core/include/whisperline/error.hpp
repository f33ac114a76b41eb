#ifndef WHISPERLINE_ERROR_HPP
#define WHISPERLINE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace whisperline {

// Root of all library errors. Subclasses mirror the failure categories the
// operations document; callers that only care about "something went wrong"
// can catch Error.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : Error {
  using Error::Error;
};
struct UnsupportedFormat : Error {
  using Error::Error;
};
struct UnsupportedRate : Error {
  using Error::Error;
};
struct ZeroSignalPower : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct ManifestError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
struct LabelError : Error {
  using Error::Error;
};
struct NormalizationError : Error {
  using Error::Error;
};
struct TooShort : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

}  // namespace whisperline

#endif  // WHISPERLINE_ERROR_HPP
