#pragma once

#include "lfi/abc.hpp"
#include "lfi/classic_density.hpp"
#include "lfi/errors.hpp"
#include "lfi/gaussian.hpp"
#include "lfi/io.hpp"
#include "lfi/linalg.hpp"
#include "lfi/maf.hpp"
#include "lfi/made.hpp"
#include "lfi/matrix.hpp"
#include "lfi/mdn.hpp"
#include "lfi/optim.hpp"
#include "lfi/rng.hpp"
#include "lfi/seq_inference.hpp"
#include "lfi/simulators.hpp"
#include "lfi/training.hpp"
