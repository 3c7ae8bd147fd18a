#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace gmseg {

using WarningSink = std::function<void(std::string_view)>;

/// Emits a warning through the active sink (stderr by default).
void warn(std::string_view message);

/// Replaces the warning sink; returns the previous one.
WarningSink set_warning_sink(WarningSink sink);

/// Restores the previous sink on destruction. Useful in tests.
class ScopedWarningCapture {
 public:
  ScopedWarningCapture();
  ~ScopedWarningCapture();
  ScopedWarningCapture(const ScopedWarningCapture&) = delete;
  ScopedWarningCapture& operator=(const ScopedWarningCapture&) = delete;

  const std::string& text() const { return text_; }
  int count() const { return count_; }

 private:
  WarningSink previous_;
  std::string text_;
  int count_ = 0;
};

}  // namespace gmseg
