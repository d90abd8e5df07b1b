#pragma once

#include <stdexcept>
#include <string>

namespace xbarsim {

// Every error carries the name of the module that raised it; what() reads
// "<module>: <message>".
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message)
      : std::runtime_error(module + ": " + message), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

#define XBARSIM_DEFINE_ERROR(Name)                                          \
  class Name : public Error {                                              \
   public:                                                                 \
    using Error::Error;                                                    \
  }

XBARSIM_DEFINE_ERROR(ShapeError);
XBARSIM_DEFINE_ERROR(RangeError);
XBARSIM_DEFINE_ERROR(ParameterError);
XBARSIM_DEFINE_ERROR(NumericError);
XBARSIM_DEFINE_ERROR(SolverError);
XBARSIM_DEFINE_ERROR(LookupError);
XBARSIM_DEFINE_ERROR(TrainingError);
XBARSIM_DEFINE_ERROR(ConfigError);
XBARSIM_DEFINE_ERROR(IoError);

#undef XBARSIM_DEFINE_ERROR

}  // namespace xbarsim
