#pragma once

#include "ctlab/passes/artifact.hpp"
#include "ctlab/passes/codegen.hpp"
#include "ctlab/passes/dce.hpp"
#include "ctlab/passes/flatten.hpp"
#include "ctlab/passes/frame.hpp"
#include "ctlab/passes/immediates.hpp"
#include "ctlab/passes/pipeline.hpp"
#include "ctlab/passes/reorder.hpp"
