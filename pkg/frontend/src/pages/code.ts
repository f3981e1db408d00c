// Code page: coding progress, artifact download, resume instructions, and
// the handoff to paper generation.

import { el } from '../dom';
import type { SessionView } from '../state';

export interface CodePageActions {
  downloadArtifacts(): Promise<ArrayBuffer>;
  startWrite(): Promise<void>;
  resumeCoding(instruction: string): Promise<void>;
}

export function renderCodePage(
  root: HTMLElement,
  view: SessionView,
  actions: CodePageActions,
): void {
  const errorBanner = el('div', { id: 'code-error', class: 'banner hidden' });
  const coding = view.snapshot.coding_session;

  const runsLine = coding
    ? `runs completed: ${coding.successful_runs.join(', ') || 'none'} of max ${coding.max_runs}`
    : 'coding has not produced runs yet';

  const transcript = el('ul', { id: 'transcript' });
  (coding?.transcript ?? []).slice(-6).forEach((entry) => {
    transcript.append(el('li', {}, `${entry.role}: ${entry.text.slice(0, 120)}`));
  });

  const downloadButton = el('button', { id: 'download-all' }, 'Download All');
  downloadButton.addEventListener('click', () => {
    void actions.downloadArtifacts().catch((error: Error) => {
      errorBanner.textContent = error.message;
      errorBanner.classList.remove('hidden');
    });
  });

  const writeButton = el('button', { id: 'generate-paper' }, 'Generate Paper');
  if (view.phase !== 'code_ready') writeButton.setAttribute('disabled', '');
  writeButton.addEventListener('click', () => {
    void actions.startWrite().catch((error: Error) => {
      errorBanner.textContent = error.message;
      errorBanner.classList.remove('hidden');
    });
  });

  root.append(
    el('h1', {}, 'Experiment code'),
    el('p', { id: 'phase-line' }, `phase: ${view.phase}`),
    el('p', { id: 'runs-line' }, runsLine),
    transcript,
    downloadButton,
    writeButton,
    errorBanner,
  );

  if (view.phase === 'awaiting_human') {
    const instructionInput = el('input', {
      id: 'resume-instruction',
      type: 'text',
      placeholder: 'Instruction for the coding agent',
    });
    const resumeButton = el('button', { id: 'resume-coding' }, 'Resume coding');
    resumeButton.addEventListener('click', () => {
      void actions.resumeCoding(instructionInput.value).catch((error: Error) => {
        errorBanner.textContent = error.message;
        errorBanner.classList.remove('hidden');
      });
    });
    root.append(
      el('div', { id: 'resume-box' }, instructionInput, resumeButton),
    );
  }
  if (view.phase === 'writing') {
    root.append(el('div', { id: 'writing-spinner' }, 'Writing the paper…'));
  }
}
