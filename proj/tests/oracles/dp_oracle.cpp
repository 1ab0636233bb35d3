#include "dp_oracle.hpp"
