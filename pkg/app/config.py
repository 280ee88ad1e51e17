from pathlib import Path
import os

# Paths
BASE_DIR = Path(__file__).parent.parent
OUTPUT_DIR = Path(os.getenv('MPSGNN_OUTPUT_DIR', BASE_DIR / "runs"))  # Default output directory for CLI runs

# Reproducibility
DEFAULT_SEED = int(os.getenv('MPSGNN_SEED', '0'))  # Master seed when --seed is not given
NUM_THREADS = int(os.getenv('MPSGNN_THREADS', '1'))  # torch intra-op threads; 1 keeps runs bit-reproducible

# Logging
VERBOSE = os.getenv('MPSGNN_VERBOSE', 'True').lower() in ('true', '1', 'yes', 'on')  # Progress lines on stderr

# Graph Configuration
L_MAX = int(os.getenv('MPSGNN_L_MAX', '4'))  # Longest meta-path the search will build
TYPE_PREFIX_SEPARATOR = "."  # "<table>.<column>" relation names
INVERSE_SUFFIX = "_inv"  # Suffix of the materialized inverse relation
MISSING_CATEGORY = "⟂"  # Category assigned to missing categorical values

# Relation Scoring Configuration
SCORING_LR = float(os.getenv('MPSGNN_SCORING_LR', '0.05'))  # Adam step size for (theta, w)
SCORING_STEPS = int(os.getenv('MPSGNN_SCORING_STEPS', '300'))  # Gradient steps per restart
SCORING_RESTARTS = int(os.getenv('MPSGNN_SCORING_RESTARTS', '3'))  # Full restarts, best loss kept
PAIR_SAMPLE_SIZE = int(os.getenv('MPSGNN_PAIR_SAMPLE_SIZE', '500'))  # Max (positive, negative) bag pairs per step
BASELINE_DRAWS = int(os.getenv('MPSGNN_BASELINE_DRAWS', '5'))  # Random parameter draws for the baseline loss
THETA_INIT_SCALE = 0.1  # theta ~ U(-scale, scale)

# Meta-path Search Configuration
ETA = float(os.getenv('MPSGNN_ETA', '0.7'))  # A relation passes if its loss < ETA * baseline
BEAM_SIZE = int(os.getenv('MPSGNN_BEAM_SIZE', '3'))  # Prefixes kept per iteration
SEARCH_EPOCHS = int(os.getenv('MPSGNN_SEARCH_EPOCHS', '150'))  # Epoch budget for prefix evaluation
SEARCH_PATIENCE = int(os.getenv('MPSGNN_SEARCH_PATIENCE', '30'))

# MPS-GNN Training Configuration
EMBEDDING_DIM = int(os.getenv('MPSGNN_EMBEDDING_DIM', '32'))
TRAIN_LR = float(os.getenv('MPSGNN_TRAIN_LR', '0.01'))
WEIGHT_DECAY = float(os.getenv('MPSGNN_WEIGHT_DECAY', '0.0005'))
MAX_EPOCHS = int(os.getenv('MPSGNN_MAX_EPOCHS', '500'))
PATIENCE = int(os.getenv('MPSGNN_PATIENCE', '50'))  # Epochs without validation improvement before stopping
SPLIT_FRACTIONS = (0.7, 0.2, 0.1)  # train / validation / test
MIN_SPLIT_TARGETS = int(os.getenv('MPSGNN_MIN_SPLIT_TARGETS', '20'))  # Below this every labelled node is used for all three splits
ACTIVATION = os.getenv('MPSGNN_ACTIVATION', 'logistic').lower()  # 'logistic' or 'relu'
SKIP_CONNECTION = os.getenv('MPSGNN_SKIP_CONNECTION', 'True').lower() in ('true', '1', 'yes', 'on')

# Synthetic Scenario Configuration
SYNTHETIC_TARGETS = int(os.getenv('MPSGNN_SYNTHETIC_TARGETS', '2000'))
POSITIVE_FRACTION = 0.3
MAX_BRANCHING = 5  # Children per planted step are drawn from 1..MAX_BRANCHING
NOISE_FEATURES = 4  # Uninformative uniform attributes per node type
DISTRACTOR_DENSITY = 2.0  # Mean out-degree of distractor relations

# Faithfulness Evaluation Configuration
REMOVAL_FRACTIONS = (0.25, 0.5, 0.75)
SUFFICIENCY_PERTURBATIONS = int(os.getenv('MPSGNN_SUFFICIENCY_PERTURBATIONS', '100'))
