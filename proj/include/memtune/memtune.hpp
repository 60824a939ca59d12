#pragma once

#include "memtune/core.hpp"
#include "memtune/dissipation.hpp"
#include "memtune/errors.hpp"
#include "memtune/fits.hpp"
#include "memtune/io.hpp"
#include "memtune/presets.hpp"
#include "memtune/ringdown.hpp"
#include "memtune/thermal.hpp"
#include "memtune/units.hpp"
