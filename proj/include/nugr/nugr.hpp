#pragma once

#include "nugr/attributes.hpp"
#include "nugr/commands.hpp"
#include "nugr/demo.hpp"
#include "nugr/error.hpp"
#include "nugr/eval.hpp"
#include "nugr/fusion_decoder.hpp"
#include "nugr/geometry.hpp"
#include "nugr/hog.hpp"
#include "nugr/linalg.hpp"
#include "nugr/losses.hpp"
#include "nugr/parallel.hpp"
#include "nugr/rng.hpp"
#include "nugr/scene.hpp"
#include "nugr/token_protocol.hpp"
