# Visualizers package for sweep result figures
