"""RNA secondary-structure thermodynamics."""
from .energy import DisallowedPair, EnergyModel, LoopTooLarge, free_energy
from .enumerate import SequenceTooLong, brute_force, enumerate_structures
from .fold import PartitionResult, ensemble_defect, mfe_structure, partition_function
from .structure import (
    ALLOWED_PAIRS,
    NUCLEOTIDES,
    HairpinTooShort,
    IllegalCharacter,
    LengthMismatch,
    SecondaryStructure,
    StructureError,
    UnbalancedBrackets,
    as_sequence,
    parse_dot_bracket,
    read_structures,
    structure_distance,
)

__all__ = [
    "ALLOWED_PAIRS",
    "NUCLEOTIDES",
    "DisallowedPair",
    "EnergyModel",
    "HairpinTooShort",
    "IllegalCharacter",
    "LengthMismatch",
    "LoopTooLarge",
    "PartitionResult",
    "SecondaryStructure",
    "SequenceTooLong",
    "StructureError",
    "UnbalancedBrackets",
    "as_sequence",
    "brute_force",
    "ensemble_defect",
    "enumerate_structures",
    "free_energy",
    "mfe_structure",
    "parse_dot_bracket",
    "partition_function",
    "read_structures",
    "structure_distance",
]
