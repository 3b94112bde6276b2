#pragma once

// Everything: corpus construction, label schemes, encoders, the CRF, model
// families, evaluation and the chronological feedback loop.

#include "methex/chrono.hpp"
#include "methex/corpus.hpp"
#include "methex/crf.hpp"
#include "methex/dataset_io.hpp"
#include "methex/embedding.hpp"
#include "methex/encoder.hpp"
#include "methex/error.hpp"
#include "methex/evaluator.hpp"
#include "methex/factored.hpp"
#include "methex/label_space.hpp"
#include "methex/matrix.hpp"
#include "methex/optimizer.hpp"
#include "methex/parallel.hpp"
#include "methex/rng.hpp"
#include "methex/synthetic.hpp"
#include "methex/tagger.hpp"
#include "methex/text.hpp"
