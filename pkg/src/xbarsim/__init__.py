"""Variability-aware memristor crossbar simulation for quantized linear layers."""

from .device import (DeviceModelParams, ProgrammedCell, TargetState,
                     program_cell, read_current, reset_cell_random)
from .converters import ConverterSpec, SaturationCounter, adc, adc_decode, dac
from .crossbar import CrossbarTile, program_tile, reset_tile, vmm
from .mapping import (CalibrationError, ConverterConfig, MappedLinear, QuantScheme,
                      compose_bits, decompose_bits, fit_correction_factor, forward,
                      map_linear, quantize_weights, remap_instance, significances)
from .qat import (DivergenceError, LinearLrSchedule, NetObservers, Observer,
                  TinyNet, evaluate, fake_quant, fake_quant_vjp, predict_logits,
                  ptq_quantize, train_float, train_qat)
from .datasets import DeskDataset, load_dataset, make_mirror_blobs
from .harness import ExperimentConfig, RunReport, calibrate, run_cell_benchmark

__version__ = "0.1.0"

__all__ = [
    "DeviceModelParams", "ProgrammedCell", "TargetState",
    "program_cell", "read_current", "reset_cell_random",
    "ConverterSpec", "SaturationCounter", "adc", "adc_decode", "dac",
    "CrossbarTile", "program_tile", "reset_tile", "vmm",
    "CalibrationError", "ConverterConfig", "MappedLinear", "QuantScheme",
    "compose_bits", "decompose_bits", "fit_correction_factor", "forward",
    "map_linear", "quantize_weights", "remap_instance", "significances",
    "DivergenceError", "LinearLrSchedule", "NetObservers", "Observer",
    "TinyNet", "evaluate", "fake_quant", "fake_quant_vjp", "predict_logits",
    "ptq_quantize", "train_float", "train_qat",
    "DeskDataset", "load_dataset", "make_mirror_blobs",
    "ExperimentConfig", "RunReport", "calibrate", "run_cell_benchmark",
]
