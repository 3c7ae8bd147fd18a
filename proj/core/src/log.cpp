#include "gmseg/log.hpp"

#include <iostream>
#include <utility>

namespace gmseg {
namespace {

WarningSink& active_sink() {
  static WarningSink sink = [](std::string_view msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}

}  // namespace

void warn(std::string_view message) {
  if (active_sink()) active_sink()(message);
}

WarningSink set_warning_sink(WarningSink sink) {
  return std::exchange(active_sink(), std::move(sink));
}

ScopedWarningCapture::ScopedWarningCapture() {
  previous_ = set_warning_sink([this](std::string_view msg) {
    text_.append(msg);
    text_.push_back('\n');
    ++count_;
  });
}

ScopedWarningCapture::~ScopedWarningCapture() { set_warning_sink(std::move(previous_)); }

}  // namespace gmseg
