# Evaluation scripts for the camm-vp laboratory
