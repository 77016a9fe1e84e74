// Copyright 2026 The DialEdit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DIALEDIT_TOOLS_CLI_H_
#define DIALEDIT_TOOLS_CLI_H_

#include <iosfwd>

namespace dialedit {

// Entry point of the dialedit tool. Returns 0 on success, 1 on usage
// errors (synopsis on `err`), 2 on runtime errors.
int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dialedit

#endif  // DIALEDIT_TOOLS_CLI_H_
