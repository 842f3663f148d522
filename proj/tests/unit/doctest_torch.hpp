#pragma once

// libtorch's logging header defines CHECK; doctest needs the name.
#include <torch/torch.h>
#undef CHECK
#include <doctest.h>
