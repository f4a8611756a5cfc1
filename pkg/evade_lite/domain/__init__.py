# Domain layer for evade-lite (entities, predictor contract, SHAP, analysis, attacks)
