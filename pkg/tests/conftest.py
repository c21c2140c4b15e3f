import sys
from pathlib import Path

# make sibling test modules importable (shared fixtures live in test_tune)
sys.path.insert(0, str(Path(__file__).parent))
