#pragma once

#include <coroutine>
#include <deque>
#include <exception>
#include <functional>
#include <optional>
#include <utility>

namespace advokat {

/// Single-threaded FIFO event loop; delivery order is the determinism anchor
/// of the whole simulator.
class EventLoop {
 public:
  void post(std::function<void()> fn) { queue_.push_back(std::move(fn)); }

  void run() {
    while (!queue_.empty() && !stopped_) {
      auto fn = std::move(queue_.front());
      queue_.pop_front();
      fn();
    }
  }

  void stop() { stopped_ = true; }
  bool stopped() const { return stopped_; }
  bool idle() const { return queue_.empty(); }

 private:
  std::deque<std::function<void()>> queue_;
  bool stopped_ = false;
};

/// Eagerly started coroutine whose awaiter resumes when the body finishes.
/// Tasks must be awaited (or completed) before destruction; peers only ever
/// co_await them immediately.
template <class T>
class [[nodiscard]] Task {
 public:
  struct promise_type {
    std::optional<T> value;
    std::exception_ptr error;
    std::coroutine_handle<> continuation;

    Task get_return_object() {
      return Task(std::coroutine_handle<promise_type>::from_promise(*this));
    }
    std::suspend_never initial_suspend() noexcept { return {}; }
    struct FinalAwaiter {
      bool await_ready() noexcept { return false; }
      std::coroutine_handle<> await_suspend(std::coroutine_handle<promise_type> h) noexcept {
        auto cont = h.promise().continuation;
        return cont ? cont : std::noop_coroutine();
      }
      void await_resume() noexcept {}
    };
    FinalAwaiter final_suspend() noexcept { return {}; }
    void return_value(T v) { value = std::move(v); }
    void unhandled_exception() { error = std::current_exception(); }
  };

  explicit Task(std::coroutine_handle<promise_type> h) : handle_(h) {}
  Task(Task&& o) noexcept : handle_(std::exchange(o.handle_, {})) {}
  Task(const Task&) = delete;
  Task& operator=(const Task&) = delete;
  ~Task() {
    if (handle_) handle_.destroy();
  }

  bool await_ready() const noexcept { return handle_.done(); }
  void await_suspend(std::coroutine_handle<> cont) noexcept {
    handle_.promise().continuation = cont;
  }
  T await_resume() {
    if (handle_.promise().error) std::rethrow_exception(handle_.promise().error);
    return std::move(*handle_.promise().value);
  }

 private:
  std::coroutine_handle<promise_type> handle_;
};

/// Fire-and-forget coroutine for actor entry points; the frame frees itself.
struct Detached {
  struct promise_type {
    Detached get_return_object() { return {}; }
    std::suspend_never initial_suspend() noexcept { return {}; }
    std::suspend_never final_suspend() noexcept { return {}; }
    void return_void() {}
    void unhandled_exception() { std::terminate(); }
  };
};

/// co_await Yield{loop}: requeue the continuation at the back of the loop.
struct Yield {
  EventLoop& loop;
  bool await_ready() const noexcept { return false; }
  void await_suspend(std::coroutine_handle<> h) {
    loop.post([h] { h.resume(); });
  }
  void await_resume() const noexcept {}
};

}  // namespace advokat
