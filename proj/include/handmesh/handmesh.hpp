#pragma once

// Umbrella header.

#include "handmesh/array.hpp"
#include "handmesh/attention.hpp"
#include "handmesh/audit.hpp"
#include "handmesh/autodiff.hpp"
#include "handmesh/camera.hpp"
#include "handmesh/config.hpp"
#include "handmesh/encoder.hpp"
#include "handmesh/errors.hpp"
#include "handmesh/gaussian.hpp"
#include "handmesh/hand_model.hpp"
#include "handmesh/image_io.hpp"
#include "handmesh/losses.hpp"
#include "handmesh/metrics.hpp"
#include "handmesh/mlp.hpp"
#include "handmesh/model.hpp"
#include "handmesh/rasterizer.hpp"
#include "handmesh/rng.hpp"
#include "handmesh/scene.hpp"
#include "handmesh/train.hpp"
