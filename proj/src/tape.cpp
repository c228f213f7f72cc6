#include "ogpssm/tape.hpp"

namespace ogpssm::ad {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() { return g_active_tape; }
void set_active_tape(Tape* tape) { g_active_tape = tape; }

}  // namespace ogpssm::ad
