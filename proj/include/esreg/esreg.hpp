#pragma once

#include "esreg/distributions.hpp"
#include "esreg/es.hpp"
#include "esreg/huber.hpp"
#include "esreg/inference.hpp"
#include "esreg/io.hpp"
#include "esreg/linalg.hpp"
#include "esreg/noncross.hpp"
#include "esreg/normal.hpp"
#include "esreg/qr.hpp"
#include "esreg/replicate.hpp"
#include "esreg/rng.hpp"
#include "esreg/sim.hpp"
#include "esreg/types.hpp"
