#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "neuroevo/app.hpp"

int main(int argc, char** argv) {
    neuroevo::configure_logging();
    doctest::Context context(argc, argv);
    return context.run();
}
