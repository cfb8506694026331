#pragma once

// Everything in one include.
#include "subqe/error.hpp"
#include "subqe/rng.hpp"
#include "subqe/text.hpp"
#include "subqe/subtitle_io.hpp"
#include "subqe/embeddings.hpp"
#include "subqe/ngram.hpp"
#include "subqe/bow_scorer.hpp"
#include "subqe/synth.hpp"
#include "subqe/features.hpp"
#include "subqe/forest.hpp"
#include "subqe/weak_labeler.hpp"
#include "subqe/nn/tensor.hpp"
#include "subqe/nn/autograd.hpp"
#include "subqe/nn/ops.hpp"
#include "subqe/nn/model.hpp"
#include "subqe/nn/train.hpp"
#include "subqe/nn/checkpoint.hpp"
#include "subqe/eval.hpp"
#include "subqe/config.hpp"
#include "subqe/toy_corpus.hpp"
#include "subqe/pipeline.hpp"
