"""Graph gradient boosting: case-weighted GBDT on probability-weighted ego-net paths."""
