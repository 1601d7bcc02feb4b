"""fairlend: disparate-impact auditing and less-discriminatory-alternative search
for binary credit risk models."""

__version__ = "0.1.0"

import types as _types

from .data import (Dataset, GroupLabels, LabeledData, ScenarioConfig, generate_scenario,
                   load_csv, split, write_csv)
from .exceptions import (DataError, EmptyGroupError, FairlendError, InstanceTooLargeError,
                         TrainingDivergedError, UndefinedAIRError)
from .impossibility import (default_instance_family, feasibility_table, impossibility_search,
                            make_instance)
from .lda import (BurdenShiftingConfig, BurdenShiftingReport, CandidateModel, Strategy,
                  pareto_frontier, prong1_adverse_impact, prong2_business_need, prong3_select,
                  proxy_diagnostics, run_burden_shifting, search_alternatives)
from .learners import (DecisionTreeRiskModel, LogisticRiskModel, fit_logistic, fit_tree,
                       load_model, model_to_json, predict, threshold_decisions)
from .metrics import (Decisions, accuracy, adverse_impact_ratio, balance_negative,
                      balance_positive, calibration_within_groups, check_three_conditions,
                      confusion, fairness_report, favorable_rates, statistical_parity)
from .mitigate import (AdversarialConfig, AdversarialDebiasingModel, FairDecisionTreeRiskModel,
                       RegularizationConfig, adversary_leakage, evaluate_split, fit_adversarial,
                       fit_fair_tree)

__all__ = [name for name, value in list(globals().items())
           if not name.startswith("_") and not isinstance(value, _types.ModuleType)]
