#pragma once

#include "embalign/candidates.hpp"
#include "embalign/errors.hpp"
#include "embalign/evaluation.hpp"
#include "embalign/forest.hpp"
#include "embalign/nrrd.hpp"
#include "embalign/parallel.hpp"
#include "embalign/pca.hpp"
#include "embalign/phantom.hpp"
#include "embalign/pipeline.hpp"
#include "embalign/render.hpp"
#include "embalign/resample.hpp"
#include "embalign/rng.hpp"
#include "embalign/selectors.hpp"
#include "embalign/similarity.hpp"
#include "embalign/volume.hpp"
