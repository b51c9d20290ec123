#include "maldef/parallel.hpp"

namespace maldef {

namespace {
std::atomic<std::size_t> g_workers{0};
}

std::size_t worker_count() noexcept {
    const std::size_t n = g_workers.load();
    if (n) return n;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

void set_worker_count(std::size_t n) noexcept { g_workers.store(n); }

} // namespace maldef
