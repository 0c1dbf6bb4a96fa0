#pragma once

#include <functional>
#include <string>
#include <vector>

namespace priorloom {

using WarningHandler = std::function<void(const std::string&)>;

// Installs a process-wide sink for warnings and returns the previous one.
// The default sink writes "[priorloom] warning: ..." lines to stderr.
WarningHandler set_warning_handler(WarningHandler handler);

void warn(const std::string& message);

// Captures warnings for the lifetime of the object (used by tests and the
// service layer to surface diagnostics in responses).
class ScopedWarningCapture {
public:
  ScopedWarningCapture();
  ~ScopedWarningCapture();
  ScopedWarningCapture(const ScopedWarningCapture&) = delete;
  ScopedWarningCapture& operator=(const ScopedWarningCapture&) = delete;

  const std::vector<std::string>& messages() const { return messages_; }
  bool contains(const std::string& needle) const;

private:
  std::vector<std::string> messages_;
  WarningHandler previous_;
};

}  // namespace priorloom
