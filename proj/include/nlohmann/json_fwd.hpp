#pragma once
// The vendored copy is the single-header release, so forward declarations
// come from the full header.
#include "../../vendor/json.hpp"
