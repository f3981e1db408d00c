// Paper page: document preview (PDF when compiled, LaTeX source otherwise),
// review trigger, and the rendered review with ratings and decision.

import { el } from '../dom';
import type { SessionView } from '../state';
import type { Review } from '../types';

export interface PaperPageActions {
  getPaper(): Promise<{ contentType: string; body: string }>;
  startReview(): Promise<void>;
  getReview(): Promise<Review>;
}

export function renderPaperPage(
  root: HTMLElement,
  view: SessionView,
  actions: PaperPageActions,
): void {
  const errorBanner = el('div', { id: 'paper-error', class: 'banner hidden' });
  const preview = el('pre', { id: 'paper-preview' }, 'Loading paper…');
  const reviewPanel = el('div', { id: 'review-panel' });

  void actions
    .getPaper()
    .then(({ contentType, body }) => {
      if (contentType.includes('pdf')) {
        preview.textContent = '[PDF compiled; use Download PDF]';
      } else {
        preview.textContent = body;
      }
    })
    .catch((error: Error) => {
      preview.textContent = `paper unavailable: ${error.message}`;
    });

  const reviewButton = el('button', { id: 'review-paper' }, 'Review Paper');
  if (view.phase !== 'paper_ready') reviewButton.setAttribute('disabled', '');
  reviewButton.addEventListener('click', () => {
    void actions.startReview().catch((error: Error) => {
      errorBanner.textContent = error.message;
      errorBanner.classList.remove('hidden');
    });
  });

  root.append(
    el('h1', {}, 'Paper'),
    el('p', { id: 'phase-line' }, `phase: ${view.phase}`),
    preview,
    reviewButton,
    errorBanner,
    reviewPanel,
  );

  if (view.phase === 'reviewing') {
    reviewPanel.append(el('div', { id: 'reviewing-spinner' }, 'Reviewing…'));
  }
  if (view.phase === 'done') {
    void actions
      .getReview()
      .then((review) => renderReview(reviewPanel, review))
      .catch((error: Error) => {
        reviewPanel.append(el('div', { class: 'banner' }, `review unavailable: ${error.message}`));
      });
  }
}

export function renderReview(panel: HTMLElement, review: Review): void {
  const ratings = el('ul', { id: 'review-ratings' });
  Object.entries(review.ratings).forEach(([name, value]) => {
    ratings.append(el('li', {}, `${name}: ${value}/4`));
  });
  panel.append(
    el('h2', {}, 'Meta review'),
    el('p', { id: 'review-summary' }, review.summary),
    el('p', { id: 'review-overall' }, `Overall: ${review.overall}/10`),
    el('p', { id: 'review-decision' }, `Decision: ${review.decision}`),
    el('p', { id: 'review-confidence' }, `Confidence: ${review.confidence}/5`),
    ratings,
  );
}
