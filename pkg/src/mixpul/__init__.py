"""PU learning with interpolation consistency and pairwise margin loss."""
