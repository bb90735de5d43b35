#pragma once

namespace rrnet {

// Full command-line surface. Returns 0 on success, 1 on validation errors,
// 2 on I/O errors. Diagnostics go to stderr.
int cli_main(int argc, const char* const* argv);

}  // namespace rrnet
