#pragma once

namespace mesokappa {

// Serial runs the reference code path on the calling thread. Parallel uses
// OpenMP; results are bit-identical to Serial.
enum class Execution { Serial, Parallel };

// Sets the OpenMP thread count; n <= 0 keeps the runtime default.
void set_thread_count(int n);
int thread_count();

}  // namespace mesokappa
