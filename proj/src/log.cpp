#include "priorloom/log.hpp"

#include <iostream>
#include <mutex>

namespace priorloom {
namespace {

std::mutex& handler_mutex() {
  static std::mutex m;
  return m;
}

WarningHandler& handler_slot() {
  static WarningHandler h = [](const std::string& msg) {
    std::cerr << "[priorloom] warning: " << msg << "\n";
  };
  return h;
}

}  // namespace

WarningHandler set_warning_handler(WarningHandler handler) {
  std::lock_guard<std::mutex> lock(handler_mutex());
  WarningHandler previous = std::move(handler_slot());
  handler_slot() = std::move(handler);
  return previous;
}

void warn(const std::string& message) {
  std::lock_guard<std::mutex> lock(handler_mutex());
  if (handler_slot()) handler_slot()(message);
}

ScopedWarningCapture::ScopedWarningCapture() {
  previous_ = set_warning_handler(
      [this](const std::string& msg) { messages_.push_back(msg); });
}

ScopedWarningCapture::~ScopedWarningCapture() {
  set_warning_handler(std::move(previous_));
}

bool ScopedWarningCapture::contains(const std::string& needle) const {
  for (const auto& m : messages_)
    if (m.find(needle) != std::string::npos) return true;
  return false;
}

}  // namespace priorloom
