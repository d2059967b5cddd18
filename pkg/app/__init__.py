# Lasso-OD - bandits lineares esparsos com orçamento fixo
