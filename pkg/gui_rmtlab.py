#!/usr/bin/env python3
"""
rmtlab - GUI Application
A graphical front end for running spectral norm experiments
"""

__license__ = "MIT"
__version__ = "1.0.0"
__status__ = "Prototype"

import dataclasses
import json
import logging
import os
import sys
from typing import List, Optional

from PySide6.QtWidgets import (
    QApplication, QWidget, QVBoxLayout, QLabel, QComboBox,
    QHBoxLayout, QPushButton, QTableWidget, QTableWidgetItem,
    QFileDialog, QMessageBox, QGroupBox, QLineEdit, QTextEdit, QSpinBox
)

import rmtlab
from catalog import ExperimentCatalog, ConfigManager, ConfigError
from experiments import ExperimentReport, report_frame

# Configure logging
logging.basicConfig(
    level=getattr(logging, os.getenv('LOG_LEVEL', 'INFO').upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S'
)

logger = logging.getLogger(__name__)

TABLE_COLUMNS = ['m', 'n', 'N', 'trial', 'measured', 'normalizer', 'ratio']


def report_table_rows(report: ExperimentReport) -> List[List[str]]:
    """One row of display strings per trial"""
    rows = []
    for r in report.records:
        rows.append([str(r.m), str(r.n), str(r.N), str(r.trial),
                     f"{r.measured:.6g}", f"{r.normalizer:.6g}", f"{r.ratio:.6g}"])
    return rows


def summary_text(report: ExperimentReport) -> str:
    lines = [f"{report.experiment}: {len(report.records)} trials",
             f"fitted C = {report.fitted_constant:.6g} (quantile {report.quantile})",
             f"mean ratio {report.mean_ratio:.6g} ± {report.ratio_standard_error:.2g}"]
    if report.ceiling is not None:
        mark = '✅' if report.fitted_constant <= report.ceiling else '❌'
        lines.append(f"{mark} ceiling {report.ceiling}")
    for name, ok in report.checks.items():
        lines.append(f"{'✅' if ok else '❌'} {name}")
    return '\n'.join(lines)


class ExperimentGui(QWidget):
    def __init__(self):
        super().__init__()
        self.setWindowTitle(f"rmtlab v{rmtlab.__version__}")
        self.setMinimumSize(1000, 750)
        self.report: Optional[ExperimentReport] = None

        layout = QVBoxLayout(self)

        # Experiment selection
        layout.addWidget(QLabel("Experiment:"))
        self.experiment_combo = QComboBox()
        self.experiment_combo.addItems(ExperimentCatalog.get_all_experiments())
        self.experiment_combo.currentTextChanged.connect(self.update_info)
        layout.addWidget(self.experiment_combo)

        self.info_text = QTextEdit()
        self.info_text.setReadOnly(True)
        self.info_text.setMaximumHeight(70)
        layout.addWidget(self.info_text)

        # === CONFIG AND RUN SETTINGS ===
        settings_group = QGroupBox("Run Settings")
        settings_layout = QVBoxLayout()

        file_layout = QHBoxLayout()
        file_layout.addWidget(QLabel("Config file:"))
        self.config_input = QLineEdit()
        self.config_input.setPlaceholderText("optional; defaults are used when empty")
        file_layout.addWidget(self.config_input)
        browse_btn = QPushButton("Browse...")
        browse_btn.clicked.connect(self.browse_config)
        file_layout.addWidget(browse_btn)
        settings_layout.addLayout(file_layout)

        spin_layout = QHBoxLayout()
        spin_layout.addWidget(QLabel("Trials:"))
        self.trials_spin = QSpinBox()
        self.trials_spin.setRange(1, 100000)
        self.trials_spin.setValue(ConfigManager.DEFAULT_CONFIG['trials'])
        spin_layout.addWidget(self.trials_spin)
        spin_layout.addWidget(QLabel("Base seed:"))
        self.seed_spin = QSpinBox()
        self.seed_spin.setRange(0, 2 ** 31 - 1)
        spin_layout.addWidget(self.seed_spin)
        spin_layout.addWidget(QLabel("Workers:"))
        self.workers_spin = QSpinBox()
        self.workers_spin.setRange(1, os.cpu_count() or 1)
        spin_layout.addWidget(self.workers_spin)
        spin_layout.addStretch()
        settings_layout.addLayout(spin_layout)

        settings_group.setLayout(settings_layout)
        layout.addWidget(settings_group)

        # Buttons
        button_layout = QHBoxLayout()
        self.run_btn = QPushButton("Run Experiment")
        self.run_btn.clicked.connect(self.run_experiment)
        button_layout.addWidget(self.run_btn)
        self.save_btn = QPushButton("Save CSV")
        self.save_btn.clicked.connect(self.save_csv)
        button_layout.addWidget(self.save_btn)
        self.clear_btn = QPushButton("Clear")
        self.clear_btn.clicked.connect(self.clear_results)
        button_layout.addWidget(self.clear_btn)
        layout.addLayout(button_layout)

        self.status_label = QLabel("")
        self.status_label.setWordWrap(True)
        layout.addWidget(self.status_label)

        self.table = QTableWidget()
        layout.addWidget(self.table)

        self.update_info(self.experiment_combo.currentText())

    def update_info(self, name: str):
        entry = ExperimentCatalog.get_entry(name)
        info = f"{entry['description']}\nStatement: {entry['statement']}\nNormalizer: {entry['normalizer']}"
        if entry['required_params']:
            info += f"\nRequired params: {', '.join(entry['required_params'])}"
        self.info_text.setText(info)

    def browse_config(self):
        path, _ = QFileDialog.getOpenFileName(self, "Open Config", "configs", "JSON Files (*.json)")
        if not path:
            return
        self.config_input.setText(path)
        try:
            with open(path) as f:
                data = json.load(f)
            self.experiment_combo.setCurrentText(data.get('experiment', self.experiment_combo.currentText()))
            self.trials_spin.setValue(int(data.get('trials', self.trials_spin.value())))
            self.seed_spin.setValue(int(data.get('base_seed', 0)))
        except (OSError, ValueError) as e:
            self._show_error(f"Cannot read {path}: {e}")

    def build_config(self):
        path = self.config_input.text().strip()
        if path:
            cfg = ConfigManager.load_config(path)
            if cfg.experiment != self.experiment_combo.currentText():
                raise ConfigError(f"Config file runs '{cfg.experiment}', "
                                  f"not the selected '{self.experiment_combo.currentText()}'")
        else:
            data = ConfigManager.get_default_config()
            data['experiment'] = self.experiment_combo.currentText()
            data.pop('ceiling')
            cfg = ConfigManager.validate(data)
        return dataclasses.replace(cfg, trials=self.trials_spin.value(), base_seed=self.seed_spin.value())

    def run_experiment(self):
        try:
            cfg = self.build_config()
            logger.info(f"Starting {cfg.experiment}: dims {cfg.dims}, {cfg.trials} trials")
            self.report = rmtlab.run_experiment(cfg, workers=self.workers_spin.value())
        except (ConfigError, ValueError) as e:
            logger.error(f"Run failed: {e}")
            self._show_error(f"Error: {e}")
            return
        except Exception as e:
            logger.error(f"Run failed: {e}", exc_info=True)
            self._show_error(f"Error: {e}")
            return
        self.populate_table(self.report)
        if self.report.passed:
            self._show_success(summary_text(self.report))
        else:
            self._show_error(summary_text(self.report))

    def populate_table(self, report: ExperimentReport):
        rows = report_table_rows(report)
        self.table.setRowCount(len(rows))
        self.table.setColumnCount(len(TABLE_COLUMNS))
        self.table.setHorizontalHeaderLabels(TABLE_COLUMNS)
        for i, row in enumerate(rows):
            for j, value in enumerate(row):
                self.table.setItem(i, j, QTableWidgetItem(value))
        self.table.resizeColumnsToContents()

    def clear_results(self):
        self.table.setRowCount(0)
        self.table.setColumnCount(0)
        self.report = None
        self.status_label.setText("")

    def save_csv(self):
        if self.report is None:
            QMessageBox.warning(self, "No Data", "Run an experiment first!")
            return
        path, _ = QFileDialog.getSaveFileName(self, "Save CSV", f"{self.report.experiment}.csv",
                                              "CSV Files (*.csv)")
        if path:
            try:
                rmtlab.save_report(self.report, path)
                self._show_success(f"Saved {len(report_frame(self.report))} rows to {path}")
            except OSError as e:
                self._show_error(f"Save error: {e}")

    def _show_success(self, message: str):
        self.status_label.setStyleSheet("color: #007700; font-weight: bold;")
        self.status_label.setText(message)

    def _show_error(self, message: str):
        self.status_label.setStyleSheet("color: #cc0000; font-weight: bold;")
        self.status_label.setText(message)


if __name__ == '__main__':
    app = QApplication(sys.argv)
    win = ExperimentGui()
    win.show()
    sys.exit(app.exec())
