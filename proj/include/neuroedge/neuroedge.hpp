// Everything in one include.

#pragma once

#include "neuroedge/convert.hpp"
#include "neuroedge/hwcost.hpp"
#include "neuroedge/imaging.hpp"
#include "neuroedge/layers.hpp"
#include "neuroedge/model_ir.hpp"
#include "neuroedge/nas.hpp"
#include "neuroedge/network.hpp"
#include "neuroedge/neuromap.hpp"
#include "neuroedge/rng.hpp"
#include "neuroedge/sim.hpp"
#include "neuroedge/smod.hpp"
#include "neuroedge/tensor.hpp"
#include "neuroedge/toml.hpp"
#include "neuroedge/train.hpp"
