"""Bayesian symbolic regression by MCMC over expression trees."""

from .canonical import canonical_form, canonical_key
from .ensembles import (
    EnsembleMember,
    PredictiveEnsemble,
    mdl_model,
    median_prediction,
    median_predictive_model,
    posterior_predictive,
)
from .fitting import (
    Dataset,
    DescriptionLengthScorer,
    FitConfig,
    FittedModel,
    bic,
    bic_score,
    description_length,
    fit_parameters,
)
from .moves import (
    MoveTables,
    Proposal,
    build_move_tables,
    propose_etr,
    propose_node_replacement,
    propose_root_move,
)
from .ops import OperationSet, default_operation_set, operation_set
from .priors import (
    CorpusStats,
    PriorFitConfig,
    PriorParams,
    corpus_stats,
    fit_hyperparameters,
    prior_energy,
    sample_from_prior,
    uniform_prior,
)
from .sampling import (
    ChainState,
    ModelTrace,
    SamplerConfig,
    TemperatureLadder,
    accept,
    mcmc_step,
    run,
    swap_attempt,
)
from .trees import (
    ExpressionTree,
    Operation,
    Parameter,
    ParseError,
    Variable,
    count_operations,
    elementary_sites,
    elementary_tree_catalog,
    evaluate,
    parse_expression,
    render,
)

__version__ = "0.1.0"
