#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest_torch.hpp"

#include "ptw/log.hpp"

int main(int argc, char** argv) {
  ptw::set_log_level(ptw::LogLevel::Quiet);
  doctest::Context context(argc, argv);
  return context.run();
}
