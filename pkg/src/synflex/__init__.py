"""Metaplastic synaptic-flexibility rule and continual-learning harness."""

__version__ = "0.1.0"

from .synapse import (Biased, Constant, Flexibility, FlexibilityProfile, RuleConfig,
                      SynapseState, Uniform, metaplastic_step, refresh_reference,
                      sample_profile, sample_values, scale)
from .network import (ClassifierNet, FeatureExtractor, FeatureStandardizer,
                      MetaplasticLayer, extract_features, forward, init_classifier,
                      make_extractor, predict_readouts, train_phase)
from .data import (DigitCorpus, TwoDigitClass, TwoDigitDataset, compose,
                   enumerate_classes, load_corpus, load_dataset, save_dataset,
                   synthesize_corpus, write_corpus)
from .curriculum import (Curriculum, FeatureBank, ItemTask, TrainSettings,
                         build_frequency, build_repetition, build_sequence, run)
from .metrics import (CorrelationReport, MemoryReport, build_report, item_accuracy,
                      memorized_flags, memorized_test, repetition_metrics, spearman)
